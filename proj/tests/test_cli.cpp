#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "pipmn/features.hpp"
#include "pipmn/runconfig.hpp"
#include "pipmn/wav.hpp"
#include "test_util.hpp"

using nlohmann::json;
using testutil::CliResult;
using testutil::run_cli;
using testutil::TempDir;

namespace {

// Pulls the single-line JSON object a command prints (last line starting '{').
json last_json_line(const std::string& output) {
  std::istringstream is(output);
  std::string line, best;
  while (std::getline(is, line))
    if (!line.empty() && line.front() == '{') best = line;
  REQUIRE_FALSE(best.empty());
  return json::parse(best);
}

// Reads the first JSON value in mixed stdout (tables may follow it).
json first_json_value(const std::string& output) {
  const std::size_t at = output.find('{');
  REQUIRE(at != std::string::npos);
  std::istringstream is(output.substr(at));
  json j;
  is >> j;
  return j;
}

std::string write_config(const TempDir& dir, const std::string& name, const json& j) {
  std::ofstream f(dir.file(name));
  f << j.dump(2);
  return dir.file(name);
}

}  // namespace

TEST_CASE("cli: features extracts, caches and reports failures") {
  TempDir dir("clifeat");
  // three 30 s clips: the published segmentation yields 7 segments each
  std::ofstream csv(dir.file("manifest.csv"));
  csv << "clip_id,file_path,labels\n";
  for (int i = 0; i < 3; ++i) {
    const std::string wav = dir.file("g" + std::to_string(i) + ".wav");
    pipmn::write_wav(wav, testutil::sine_wave(30.0, 180.0 + 60.0 * i, 22050));
    csv << "g" << i << "," << wav << ",c" << i << "\n";
  }
  csv.close();
  const std::string cache = dir.file("cache");

  const CliResult cold = run_cli("features --manifest " + dir.file("manifest.csv") +
                                 " --cache-dir " + cache + " --frontend mel100 --seed 3");
  CHECK(cold.exit_code == 0);
  CHECK(cold.output.find("21 extracted, 0 cached, 0 failed") != std::string::npos);

  int pipf_files = 0;
  for (const auto& entry : std::filesystem::directory_iterator(cache + "/mel100"))
    if (entry.path().extension() == ".pipf") ++pipf_files;
  CHECK(pipf_files == 21);  // 3 x 7 segments

  const CliResult warm = run_cli("features --manifest " + dir.file("manifest.csv") +
                                 " --cache-dir " + cache + " --frontend mel100 --seed 3");
  CHECK(warm.exit_code == 0);
  CHECK(warm.output.find("0 extracted, 21 cached, 0 failed") != std::string::npos);

  // a manifest pointing at a missing file exits 2
  std::ofstream csv2(dir.file("broken.csv"));
  csv2 << "clip_id,file_path,labels\ngood," << dir.file("g0.wav") << ",a\nbad,"
       << dir.file("void.wav") << ",b\n";
  csv2.close();
  const CliResult broken = run_cli("features --manifest " + dir.file("broken.csv") +
                                   " --cache-dir " + dir.file("cache2") + " --seed 3");
  CHECK(broken.exit_code == 2);
  CHECK(broken.output.find("void.wav") != std::string::npos);
}

TEST_CASE("cli: params matches the published budgets") {
  TempDir dir("cliparams");
  const std::string base = write_config(dir, "base.json", json::object());
  const CliResult r = run_cli("params --config " + base);
  CHECK(r.exit_code == 0);
  CHECK(last_json_line(r.output).at("total_params").get<long>() == 1375797);

  const std::string mfcc =
      write_config(dir, "mfcc.json", json{{"in_dim", 50}, {"frontend", "mfcc50"}});
  CHECK(last_json_line(run_cli("params --config " + mfcc).output).at("total_params").get<long>() ==
        348297);

  const std::string bad = write_config(dir, "bad.json", json{{"bogus_key", 1}});
  const CliResult rb = run_cli("params --config " + bad);
  CHECK(rb.exit_code == 1);
  CHECK(rb.output.find("bogus_key") != std::string::npos);
}

TEST_CASE("cli: train, eval and predict round trip on a tiny audio set") {
  TempDir dir("clitrain");
  const std::string manifest = testutil::make_audio_manifest(dir, 12, 3, 2.0);
  const std::string cache = dir.file("cache");

  CHECK(run_cli("features --manifest " + manifest + " --cache-dir " + cache + " --seed 7")
            .exit_code == 0);

  const std::string cfg = write_config(
      dir, "run.json",
      json{{"n", 2}, {"kappas", {2, 3}}, {"time_length", 5}, {"in_dim", 100}, {"alpha", 2},
           {"num_classes", 3}, {"manifest", manifest}, {"cache_dir", cache}, {"seed", 7},
           {"epochs", 2}, {"batch_size", 8}});
  const std::string out1 = dir.file("run1");
  const CliResult t1 = run_cli("train --config " + cfg + " --out " + out1);
  CHECK(t1.exit_code == 0);
  CHECK(std::filesystem::exists(out1 + "/checkpoint.pipc"));
  CHECK(std::filesystem::exists(out1 + "/runlog.jsonl"));
  CHECK(std::filesystem::exists(out1 + "/metrics.json"));

  // identical seed, identical run log bytes
  const std::string out2 = dir.file("run2");
  CHECK(run_cli("train --config " + cfg + " --out " + out2).exit_code == 0);
  CHECK(testutil::read_text(out1 + "/runlog.jsonl") == testutil::read_text(out2 + "/runlog.jsonl"));

  // the effective config echoed into metrics.json re-parses identically
  const json metrics = json::parse(testutil::read_text(out1 + "/metrics.json"));
  const json echoed = metrics.at("config");
  CHECK(echoed.at("seed").get<int>() == 7);
  CHECK(echoed.at("epochs").get<int>() == 2);
  CHECK(pipmn::RunConfig::from_json(echoed).to_json() ==
        pipmn::RunConfig::from_file(cfg).to_json());

  // eval on the val split matches the metrics stored at training time
  const CliResult ev = run_cli("eval --checkpoint " + out1 + "/checkpoint.pipc --split val" +
                               " --cache-dir " + cache);
  CHECK(ev.exit_code == 0);
  const json ev_json = first_json_value(ev.output);
  CHECK(ev_json.at("accuracy") == metrics.at("metrics").at("accuracy"));
  CHECK(ev_json.at("loss") == metrics.at("metrics").at("loss"));
  CHECK(ev_json.at("micro_f1") == ev_json.at("accuracy"));

  // a 30 s file predicts 7 segments whose probabilities sum to one
  const std::string long_wav = dir.file("long.wav");
  pipmn::write_wav(long_wav, testutil::sine_wave(30.0, 220.0, 22050));
  const CliResult pr =
      run_cli("predict --checkpoint " + out1 + "/checkpoint.pipc --wav " + long_wav);
  CHECK(pr.exit_code == 0);
  const json pj = first_json_value(pr.output);
  REQUIRE(pj.at("segments").size() == 7);
  for (const auto& seg : pj.at("segments")) {
    double total = 0.0;
    for (const auto& [label, p] : seg.at("probabilities").items()) total += p.get<double>();
    CHECK(total == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(seg.contains("label"));
  }

  const CliResult miss =
      run_cli("predict --checkpoint " + out1 + "/checkpoint.pipc --wav " + dir.file("no.wav"));
  CHECK(miss.exit_code == 2);

  // unreadable checkpoint also exits 2
  const CliResult badck = run_cli("eval --checkpoint " + dir.file("nothing.pipc") +
                                  " --split val --cache-dir " + cache);
  CHECK(badck.exit_code == 2);
}

TEST_CASE("cli: PIPMN_CACHE_DIR is the cache-dir default") {
  TempDir dir("clienv");
  std::ofstream csv(dir.file("manifest.csv"));
  csv << "clip_id,file_path,labels\n";
  const std::string wav = dir.file("c.wav");
  pipmn::write_wav(wav, testutil::sine_wave(2.0, 300.0, 22050));
  csv << "a," << wav << ",x\nb," << wav << ",y\n";
  csv.close();
  const CliResult r =
      run_cli("features --manifest " + dir.file("manifest.csv") + " --frontend mel100 --seed 1",
              "PIPMN_CACHE_DIR=" + dir.file("envcache"));
  CHECK(r.exit_code == 0);
  CHECK(std::filesystem::exists(dir.file("envcache") + "/mel100/index.jsonl"));
}

TEST_CASE("cli: train with zero epochs checkpoints the initialization, reproducibly") {
  TempDir dir("cliinit");
  const std::string manifest = testutil::make_audio_manifest(dir, 10, 2, 1.5);
  const std::string cache = dir.file("cache");
  REQUIRE(run_cli("features --manifest " + manifest + " --cache-dir " + cache + " --seed 2")
              .exit_code == 0);
  const std::string cfg = write_config(
      dir, "run.json",
      json{{"n", 1}, {"kappas", {2}}, {"time_length", 3}, {"in_dim", 100}, {"alpha", 2},
           {"num_classes", 2}, {"cache_dir", cache}, {"seed", 2}, {"epochs", 0},
           {"batch_size", 4}});
  REQUIRE(run_cli("train --config " + cfg + " --out " + dir.file("o1")).exit_code == 0);
  REQUIRE(run_cli("train --config " + cfg + " --out " + dir.file("o2")).exit_code == 0);
  CHECK(testutil::read_text(dir.file("o1") + "/checkpoint.pipc") ==
        testutil::read_text(dir.file("o2") + "/checkpoint.pipc"));

  // the 64-bit verification precision drives the same pipeline end to end
  const CliResult f64 =
      run_cli("train --config " + cfg + " --out " + dir.file("o64") + " --precision f64");
  CHECK(f64.exit_code == 0);
  CHECK(std::filesystem::exists(dir.file("o64") + "/checkpoint.pipc"));
}

TEST_CASE("cli: gradcheck passes on a fresh build") {
  const CliResult r = run_cli("gradcheck --size tiny");
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("PASS") != std::string::npos);
  CHECK(r.output.find("full_model") != std::string::npos);
}

TEST_CASE("cli: ablate sweeps the seven-variant grid") {
  TempDir dir("cliablate");
  const std::string manifest = testutil::make_audio_manifest(dir, 12, 3, 2.0);
  const std::string cache = dir.file("cache");
  const std::string cfg = write_config(
      dir, "run.json",
      json{{"num_classes", 3}, {"manifest", manifest}, {"cache_dir", cache}, {"seed", 5},
           {"epochs", 1}, {"batch_size", 8}});
  const std::string out = dir.file("ablation");
  const CliResult r = run_cli("ablate --config " + cfg + " --out-dir " + out);
  CHECK(r.exit_code == 0);

  std::ifstream csv(out + "/ablation.csv");
  std::string line;
  std::getline(csv, line);
  CHECK(line == "variant,accuracy,macro_precision,macro_f1,micro_f1,params");
  std::vector<std::string> rows;
  while (std::getline(csv, line))
    if (!line.empty()) rows.push_back(line);
  REQUIRE(rows.size() == 7);

  // params column matches the params command per variant
  auto params_of = [&](const std::string& row) {
    return std::stol(row.substr(row.rfind(',') + 1));
  };
  const std::string base_cfg = write_config(dir, "basecheck.json", json{{"num_classes", 3}});
  const long base_params =
      last_json_line(run_cli("params --config " + base_cfg).output).at("total_params").get<long>();
  CHECK(rows[0].rfind("base,", 0) == 0);
  CHECK(params_of(rows[0]) == base_params);

  // the mel100 row keeps the base parameter count, mfcc50 shrinks it
  long mel_params = 0, mfcc_params = 0;
  for (const auto& row : rows) {
    if (row.rfind("mel100,", 0) == 0) mel_params = params_of(row);
    if (row.rfind("mfcc50,", 0) == 0) mfcc_params = params_of(row);
  }
  CHECK(mel_params == base_params);
  CHECK(mfcc_params < base_params);

  for (const std::string& name :
       {"base", "no_long_range_skip", "no_positional_modeling", "no_linear_skip", "oms",
        "mfcc50", "mel100"})
    CHECK(std::filesystem::exists(out + "/" + name + "/checkpoint.pipc"));
}

TEST_CASE("cli: ablate honors a variants subset from the config") {
  TempDir dir("clivariants");
  const std::string manifest = testutil::make_audio_manifest(dir, 10, 2, 1.5);
  const std::string cache = dir.file("cache");
  REQUIRE(run_cli("features --manifest " + manifest + " --cache-dir " + cache + " --seed 4")
              .exit_code == 0);
  const std::string cfg = write_config(
      dir, "run.json",
      json{{"num_classes", 2}, {"manifest", manifest}, {"cache_dir", cache}, {"seed", 4},
           {"epochs", 0}, {"batch_size", 4}, {"variants", {"base", "mfcc50"}}});
  const CliResult r = run_cli("ablate --config " + cfg + " --out-dir " + dir.file("out"));
  CHECK(r.exit_code == 0);
  std::ifstream csv(dir.file("out") + "/ablation.csv");
  std::string line;
  std::getline(csv, line);
  std::vector<std::string> rows;
  while (std::getline(csv, line))
    if (!line.empty()) rows.push_back(line);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].rfind("base,", 0) == 0);
  CHECK(rows[1].rfind("mfcc50,", 0) == 0);
}

TEST_CASE("cli: exit-code contract for overrides, divergence and empty splits") {
  TempDir dir("cliexit");
  const std::string manifest = testutil::make_audio_manifest(dir, 10, 2, 1.5);
  const std::string cache = dir.file("cache");
  REQUIRE(run_cli("features --manifest " + manifest + " --cache-dir " + cache + " --seed 6")
              .exit_code == 0);
  const std::string cfg = write_config(
      dir, "run.json",
      json{{"n", 1}, {"kappas", {2}}, {"time_length", 3}, {"in_dim", 100}, {"alpha", 2},
           {"num_classes", 2}, {"cache_dir", cache}, {"seed", 6}, {"epochs", 5},
           {"batch_size", 4}});

  // --epochs flag overrides the config value
  const CliResult t = run_cli("train --config " + cfg + " --out " + dir.file("o") +
                              " --epochs 1");
  CHECK(t.exit_code == 0);
  int epoch_lines = 0;
  std::istringstream log(testutil::read_text(dir.file("o") + "/runlog.jsonl"));
  for (std::string line; std::getline(log, line);)
    if (line.find("\"type\":\"epoch\"") != std::string::npos) ++epoch_lines;
  CHECK(epoch_lines == 1);

  // divergence (absurd learning rate) exits 3
  const std::string diverge = write_config(
      dir, "diverge.json",
      json{{"n", 1}, {"kappas", {2}}, {"time_length", 3}, {"in_dim", 100}, {"alpha", 2},
           {"num_classes", 2}, {"cache_dir", cache}, {"seed", 6}, {"epochs", 5},
           {"batch_size", 4}, {"lr", 1e18}});
  CHECK(run_cli("train --config " + diverge + " --out " + dir.file("d")).exit_code == 3);

  // an empty split exits 1: a 2-clip cache lands everything in train
  TempDir small("cliempty");
  std::ofstream csv(small.file("manifest.csv"));
  const std::string wav = small.file("c.wav");
  pipmn::write_wav(wav, testutil::sine_wave(1.5, 300.0, 22050));
  csv << "clip_id,file_path,labels\na," << wav << ",x\nb," << wav << ",y\n";
  csv.close();
  const std::string cache2 = small.file("cache");
  REQUIRE(run_cli("features --manifest " + small.file("manifest.csv") + " --cache-dir " +
                  cache2 + " --seed 1")
              .exit_code == 0);
  const std::string cfg2 = write_config(
      small, "run.json",
      json{{"n", 1}, {"kappas", {2}}, {"time_length", 3}, {"in_dim", 100}, {"alpha", 2},
           {"num_classes", 2}, {"cache_dir", cache2}, {"seed", 1}, {"epochs", 0},
           {"batch_size", 4}});
  REQUIRE(run_cli("train --config " + cfg2 + " --out " + small.file("o")).exit_code == 0);
  const CliResult ev = run_cli("eval --checkpoint " + small.file("o") + "/checkpoint.pipc" +
                               " --split val --cache-dir " + cache2);
  CHECK(ev.exit_code == 1);
  CHECK(ev.output.find("empty") != std::string::npos);
}

TEST_CASE("cli: ablate records variant failures, keeps sweeping, exits 2") {
  TempDir dir("cliablfail");
  const std::string manifest = testutil::make_audio_manifest(dir, 10, 2, 1.5);
  const std::string cache = dir.file("cache");
  REQUIRE(run_cli("features --manifest " + manifest + " --cache-dir " + cache + " --seed 8")
              .exit_code == 0);

  // same clip ids, but the audio paths no longer exist: the stack5 cache
  // keeps the base variants alive while mfcc50/mel100 extraction fails
  std::ofstream broken(dir.file("broken.csv"));
  broken << "clip_id,file_path,labels\n";
  for (int i = 0; i < 10; ++i)
    broken << "clip" << i << "," << dir.file("void.wav") << ",class" << (i % 2) << "\n";
  broken.close();

  const std::string cfg = write_config(
      dir, "run.json",
      json{{"num_classes", 2}, {"manifest", dir.file("broken.csv")}, {"cache_dir", cache},
           {"seed", 8}, {"epochs", 0}, {"batch_size", 4}});
  const CliResult r = run_cli("ablate --config " + cfg + " --out-dir " + dir.file("out"));
  CHECK(r.exit_code == 2);

  std::ifstream csvf(dir.file("out") + "/ablation.csv");
  std::string line;
  std::getline(csvf, line);
  int ok_rows = 0, blank_rows = 0;
  while (std::getline(csvf, line)) {
    if (line.empty()) continue;
    if (line.find(",,,,,") != std::string::npos)
      ++blank_rows;
    else
      ++ok_rows;
  }
  CHECK(ok_rows == 5);
  CHECK(blank_rows == 2);  // mfcc50 and mel100 could not extract features
}
