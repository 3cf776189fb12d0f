#pragma once

// Plain CSV / JSON outputs of the runners, with readers for the formats
// that are consumed downstream. Floating values are written with 17
// significant digits so reloading reproduces them exactly.

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"

#include "chg/experiments.hpp"
#include "chg/selection.hpp"
#include "chg/valuation.hpp"

namespace chg {

struct ValuesRow {
  std::size_t index = 0;
  int label = 0;
  std::optional<bool> is_noisy;
  double mean_value = 0.0;
  std::size_t rank = 0;

  friend bool operator==(const ValuesRow&, const ValuesRow&) = default;
};

// One row per datum; `noise_mask` may be empty.
std::vector<ValuesRow> make_values_rows(std::span<const double> values,
                                        std::span<const int> labels,
                                        const std::vector<bool>& noise_mask = {});

// Columns index,label[,is_noisy],mean_value,rank. is_noisy appears only when
// every row carries it.
void write_values_csv(const std::filesystem::path& path, const std::vector<ValuesRow>& rows);
std::vector<ValuesRow> read_values_csv(const std::filesystem::path& path);

// Columns epoch,train_loss,test_accuracy,wall_time; test_accuracy is blank
// when no test set was given.
void write_metrics_csv(const std::filesystem::path& path, const std::vector<EpochMetrics>& rows);
std::vector<EpochMetrics> read_metrics_csv(const std::filesystem::path& path);

// One JSON object per selection event.
nlohmann::json selection_event_json(const SelectionPlan& plan);
void write_selection_history_jsonl(const std::filesystem::path& path,
                                   const std::vector<SelectionPlan>& events);

nlohmann::json to_json(const DetectionReport& report);
DetectionReport detection_from_json(const nlohmann::json& j);

// Columns fraction,lowest_first,highest_first,random; blank cells for
// skipped points.
void write_removal_csv(const std::filesystem::path& path, const RemovalCurve& curve);
RemovalCurve read_removal_csv(const std::filesystem::path& path);

// Long-format variants for external plotting.
void write_detection_long_csv(const std::filesystem::path& path, const DetectionReport& report);
void write_removal_long_csv(const std::filesystem::path& path, const RemovalCurve& curve);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace chg
