#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace neaw {

inline constexpr std::string_view kCodeVersion = "0.1.0";

// One flat bag of knobs shared by every subcommand. Field defaults mirror the
// reference protocol: encoder 50 epochs, eta 1e-2, batch 4; classifier 100
// epochs, lr 1e-3, batch 32; encoder widths 64/128/1024, head 512/256.
struct ExperimentConfig {
  std::string dataset = "synthetic";  // synthetic | point-mnist | modelnet-off
  std::string data;                   // dataset dir; empty -> <out>/dataset
  std::string out = "runs/default";
  int train_per_class = 40;
  int test_per_class = 10;
  int points = 1024;      // per cloud (cap for point-mnist strokes)
  double jitter = 0.02;   // synthetic surface noise std
  std::string rule = "neaw";
  std::optional<double> eta;  // unset: limited-data schedule picks it
  double a = 1.0;
  double b = 1.0;
  double eps = 0.0;  // activity dead-band
  int epochs = 50;
  int batch = 4;  // clouds per merged batch
  int clf_epochs = 100;
  double clf_lr = 1e-3;
  int clf_batch = 32;
  double fraction = 1.0;  // stratified share of the train split
  uint64_t seed = 1;
  int threads = 1;  // cap on workers; phases are sequential either way
  int enc_h1 = 64;
  int enc_h2 = 128;
  int enc_out = 1024;
  int clf_h1 = 512;
  int clf_h2 = 256;
  bool ema = false;  // smooth activity estimates across batches
  double ema_decay = 0.9;

  // Explicit --eta wins; otherwise 0.01/fraction clamped to [0.01, 0.1]
  // (full data trains at 1e-2, a 10% subset at 1e-1).
  double effective_eta() const;
};

// key=value lines, '#' comments. Keys are the long flag names. Unknown keys
// and malformed numbers throw ParseError.
void apply_config_kv(ExperimentConfig& cfg, std::string_view key, std::string_view value);
void load_config_file(ExperimentConfig& cfg, const std::filesystem::path& path);
void validate_config(const ExperimentConfig& cfg);

// Canonical key -> rendered value for manifests; eta is the effective one.
std::map<std::string, std::string> config_snapshot(const ExperimentConfig& cfg);

struct RunManifest {
  std::string command;
  std::map<std::string, std::string> config;
  std::vector<std::pair<std::string, double>> phases;  // name, wall seconds
  std::vector<std::string> outputs;                    // files this run wrote
};

// JSON with an fnv1a64 hash per listed output, written atomically last.
void write_manifest(const std::filesystem::path& path, const RunManifest& manifest);

// Subcommand bodies. Each returns a process exit code: 0 ok, 1 verification
// violation; usage and I/O failures are thrown (ParseError/invalid_argument
// -> 2, IoError -> 3 at the top level).
int cmd_gen(const ExperimentConfig& cfg);
int cmd_train_encoder(const ExperimentConfig& cfg);
int cmd_train_classifier(const ExperimentConfig& cfg);
int cmd_eval(const ExperimentConfig& cfg);
int cmd_analyze(const ExperimentConfig& cfg);
int cmd_verify(const ExperimentConfig& cfg, const std::string& suite, int64_t n);
int cmd_sweep_ab(const ExperimentConfig& cfg, const std::vector<double>& a_values,
                 const std::vector<double>& b_values);
int cmd_export(const ExperimentConfig& cfg);

// Full argv interface used by the binary and by integration tests.
int run_cli(int argc, const char* const* argv);

}  // namespace neaw
