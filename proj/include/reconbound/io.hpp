#pragma once

// Dataset ingestion (IDX image/label files), a procedural digit corpus for
// self-contained runs, JSON run configuration, and the end-to-end pipeline.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "reconbound/accounting.hpp"
#include "reconbound/mechanisms.hpp"
#include "reconbound/models.hpp"

namespace reconbound {

// ---------------------------------------------------------------------------
// IDX files (big-endian magic + dims, uint8 payload).

struct IdxImages {
  int64_t count = 0, rows = 0, cols = 0;
  std::vector<uint8_t> pixels;  // count * rows * cols
};

struct IdxLabels {
  std::vector<uint8_t> labels;
};

IdxImages parse_idx_images(const std::string& path);
IdxLabels parse_idx_labels(const std::string& path);
void write_idx_images(const std::string& path, const IdxImages& images);
void write_idx_labels(const std::string& path, const IdxLabels& labels);

// Flattens to row-major feature vectors scaled into [box.lo, box.hi].
Dataset idx_to_dataset(const IdxImages& images, const IdxLabels& labels, Box box);

// Keeps classes {a, b}, relabeled to {0, 1} in input order; limit > 0 caps the
// total count.
Dataset filter_binary(const Dataset& data, int class_a, int class_b, int64_t limit = 0);

// ---------------------------------------------------------------------------
// Procedural digit corpus: stroke skeletons rendered with random affine
// jitter, stroke width variation and pixel noise. Serves as a stand-in
// corpus with the same file format and value range as handwritten-digit sets.

struct SyntheticConfig {
  int64_t per_class = 50;
  std::vector<int> digits = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  int64_t rows = 28, cols = 28;
  double noise = 0.06;
  uint64_t seed = 1;
};

struct SyntheticCorpus {
  IdxImages images;
  IdxLabels labels;
};

SyntheticCorpus generate_digit_corpus(const SyntheticConfig& cfg);

// ---------------------------------------------------------------------------
// Run configuration.

struct DataConfig {
  std::string source = "synthetic";  // "synthetic" | "idx"
  std::string images, labels;        // idx paths
  SyntheticConfig synth;
  std::vector<int> classes;  // binary filter when size == 2; empty keeps all
  int64_t limit = 0;
  Box box;
};

struct MechanismConfig {
  std::string kind = "output_perturbation";  // | "dp_sgd"
  double lambda = 1e-2;                      // output perturbation
  double sigma = 1e-2;                       // release noise / noise multiplier
  SgdConfig sgd;                             // dp_sgd parameters
};

struct AttackConfig {
  bool enabled = false;
  int64_t trials = 100;
  std::vector<int64_t> targets;  // explicit indices; else `count` random ones
  int64_t count = 10;
};

struct RunConfig {
  uint64_t seed = 1;
  DataConfig data;
  ModelSpec model;
  MechanismConfig mechanism;
  AccountingParams accounting;
  AttackConfig attack;
  bool unsafe_reveal = false;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

Dataset load_dataset(const DataConfig& cfg);

// ---------------------------------------------------------------------------
// Pipeline.

struct AttackSummary {
  int64_t target = -1;
  double mse_mean = 0.0;
  double mse_stderr = 0.0;
  double baseline_mse = 0.0;  // random-guess midpoint attack, same trials
  int64_t trials = 0;
  int64_t fallbacks = 0;
};

struct PipelineResult {
  PrivacyReport report;
  double train_accuracy = 0.0;
  std::vector<AttackSummary> attacks;
  std::vector<std::string> files_written;
};

// Stages: data, train, account, bounds, attack (optional), report. Writes
// report.json / report.csv / checkpoint.{bin,json} / attack.json and a
// MANIFEST.json recording stage status and wall time into `out_dir`.
PipelineResult run_pipeline(const RunConfig& cfg, const std::string& out_dir);

// Sweeps mechanism parameters (cartesian product over the provided lists),
// running accounting and bounds per point; appends one row per point to
// grid.csv under `out_dir`.
struct GridSpec {
  std::vector<double> sigma;
  std::vector<double> clip;
  std::vector<int64_t> iters;
  std::vector<double> lambda;  // output perturbation only
};

GridSpec parse_grid_spec(const std::string& json_text);
std::string run_grid(const RunConfig& base, const GridSpec& grid,
                     const std::string& out_dir);  // returns grid.csv path

}  // namespace reconbound
