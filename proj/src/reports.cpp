#include "chg/reports.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "chg/errors.hpp"

namespace chg {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << std::setprecision(17);
  return out;
}

// Shortest representation that parses back to the same double.
struct Num {
  double v;
  friend std::ostream& operator<<(std::ostream& os, Num n) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), n.v);
    return os.write(buf, res.ptr - buf);
  }
};

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read " + path.string());
  return in;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ls(line);
  while (std::getline(ls, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double to_double(const std::string& s) {
  try {
    return std::stod(s);
  } catch (const std::exception&) {
    throw InputError("bad number '" + s + "'");
  }
}

std::size_t to_size(const std::string& s) {
  try {
    return static_cast<std::size_t>(std::stoull(s));
  } catch (const std::exception&) {
    throw InputError("bad integer '" + s + "'");
  }
}

// Header line, then the remaining non-empty lines split on commas.
std::vector<std::vector<std::string>> read_csv_body(const std::filesystem::path& path,
                                                    const std::vector<std::string>& expected) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line) || split(line) != expected) {
    throw InputError("unexpected header in " + path.string());
  }
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != expected.size()) throw InputError("ragged row in " + path.string());
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace

std::vector<ValuesRow> make_values_rows(std::span<const double> values,
                                        std::span<const int> labels,
                                        const std::vector<bool>& noise_mask) {
  if (labels.size() != values.size()) throw InputError("labels not aligned with values");
  if (!noise_mask.empty() && noise_mask.size() != values.size()) {
    throw InputError("noise mask not aligned with values");
  }
  const auto ranks = value_ranks(values);
  std::vector<ValuesRow> rows(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    rows[i].index = i;
    rows[i].label = labels[i];
    if (!noise_mask.empty()) rows[i].is_noisy = noise_mask[i];
    rows[i].mean_value = values[i];
    rows[i].rank = ranks[i];
  }
  return rows;
}

void write_values_csv(const std::filesystem::path& path, const std::vector<ValuesRow>& rows) {
  bool with_noise = !rows.empty();
  for (const auto& r : rows) with_noise = with_noise && r.is_noisy.has_value();
  auto out = open_out(path);
  out << (with_noise ? "index,label,is_noisy,mean_value,rank\n" : "index,label,mean_value,rank\n");
  for (const auto& r : rows) {
    out << r.index << ',' << r.label << ',';
    if (with_noise) out << (*r.is_noisy ? 1 : 0) << ',';
    out << Num{r.mean_value} << ',' << r.rank << '\n';
  }
}

std::vector<ValuesRow> read_values_csv(const std::filesystem::path& path) {
  std::string header;
  {
    auto in = open_in(path);
    std::getline(in, header);
  }
  const bool with_noise = header == "index,label,is_noisy,mean_value,rank";
  const auto body = read_csv_body(path, split(header));
  if (!with_noise && header != "index,label,mean_value,rank") {
    throw InputError("unexpected header in " + path.string());
  }
  std::vector<ValuesRow> rows;
  for (const auto& c : body) {
    ValuesRow r;
    std::size_t k = 0;
    r.index = to_size(c[k++]);
    r.label = static_cast<int>(std::stol(c[k++]));
    if (with_noise) r.is_noisy = c[k++] == "1";
    r.mean_value = to_double(c[k++]);
    r.rank = to_size(c[k++]);
    rows.push_back(r);
  }
  return rows;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<EpochMetrics>& rows) {
  auto out = open_out(path);
  out << "epoch,train_loss,test_accuracy,wall_time\n";
  for (const auto& m : rows) {
    out << m.epoch << ',' << Num{m.train_loss} << ',';
    if (m.test_accuracy) out << Num{*m.test_accuracy};
    out << ',' << Num{m.wall_time} << '\n';
  }
}

std::vector<EpochMetrics> read_metrics_csv(const std::filesystem::path& path) {
  std::vector<EpochMetrics> rows;
  for (const auto& c :
       read_csv_body(path, {"epoch", "train_loss", "test_accuracy", "wall_time"})) {
    EpochMetrics m;
    m.epoch = to_size(c[0]);
    m.train_loss = to_double(c[1]);
    if (!c[2].empty()) m.test_accuracy = to_double(c[2]);
    m.wall_time = to_double(c[3]);
    rows.push_back(m);
  }
  return rows;
}

nlohmann::json selection_event_json(const SelectionPlan& plan) {
  nlohmann::json weights{{"count", plan.weights.size()}};
  if (!plan.weights.empty()) {
    double lo = plan.weights.front(), hi = lo, sum = 0.0;
    for (double w : plan.weights) {
      lo = std::min(lo, w);
      hi = std::max(hi, w);
      sum += w;
    }
    weights["min"] = lo;
    weights["max"] = hi;
    weights["mean"] = sum / static_cast<double>(plan.weights.size());
  }
  return {{"epoch", plan.epoch_created},
          {"subset_size", plan.subset.size()},
          {"per_class_counts", plan.per_class_counts},
          {"per_class_indices", plan.per_class_indices},
          {"weights", weights}};
}

void write_selection_history_jsonl(const std::filesystem::path& path,
                                   const std::vector<SelectionPlan>& events) {
  auto out = open_out(path);
  for (const auto& e : events) out << selection_event_json(e).dump() << '\n';
}

nlohmann::json to_json(const DetectionReport& report) {
  return {{"fraction_inspected", report.fraction_inspected},
          {"detection_rate", report.detection_rate},
          {"random_baseline", report.random_baseline},
          {"auc", report.auc}};
}

DetectionReport detection_from_json(const nlohmann::json& j) {
  try {
    DetectionReport r;
    r.fraction_inspected = j.at("fraction_inspected").get<Vector>();
    r.detection_rate = j.at("detection_rate").get<Vector>();
    r.random_baseline = j.at("random_baseline").get<Vector>();
    r.auc = j.at("auc").get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed detection report: ") + e.what());
  }
}

void write_removal_csv(const std::filesystem::path& path, const RemovalCurve& curve) {
  auto out = open_out(path);
  out << "fraction";
  for (auto o : curve.orders) out << ',' << to_string(o);
  out << '\n';
  for (std::size_t f = 0; f < curve.removal_fractions.size(); ++f) {
    out << Num{curve.removal_fractions[f]};
    for (std::size_t o = 0; o < curve.orders.size(); ++o) {
      out << ',';
      if (curve.accuracy[o][f]) out << Num{*curve.accuracy[o][f]};
    }
    out << '\n';
  }
}

RemovalCurve read_removal_csv(const std::filesystem::path& path) {
  RemovalCurve curve;
  std::vector<std::string> header{"fraction"};
  for (auto o : curve.orders) header.push_back(to_string(o));
  const auto body = read_csv_body(path, header);
  curve.accuracy.assign(curve.orders.size(), {});
  for (const auto& c : body) {
    curve.removal_fractions.push_back(to_double(c[0]));
    for (std::size_t o = 0; o < curve.orders.size(); ++o) {
      curve.accuracy[o].push_back(c[o + 1].empty() ? std::nullopt
                                                   : std::optional(to_double(c[o + 1])));
    }
  }
  return curve;
}

void write_detection_long_csv(const std::filesystem::path& path, const DetectionReport& report) {
  auto out = open_out(path);
  out << "fraction_inspected,series,rate\n";
  for (std::size_t k = 0; k < report.fraction_inspected.size(); ++k) {
    out << Num{report.fraction_inspected[k]} << ",detector," << Num{report.detection_rate[k]} << '\n';
  }
  for (std::size_t k = 0; k < report.fraction_inspected.size(); ++k) {
    out << Num{report.fraction_inspected[k]} << ",random," << Num{report.random_baseline[k]} << '\n';
  }
}

void write_removal_long_csv(const std::filesystem::path& path, const RemovalCurve& curve) {
  auto out = open_out(path);
  out << "fraction,order,accuracy\n";
  for (std::size_t o = 0; o < curve.orders.size(); ++o) {
    for (std::size_t f = 0; f < curve.removal_fractions.size(); ++f) {
      if (!curve.accuracy[o][f]) continue;
      out << Num{curve.removal_fractions[f]} << ',' << to_string(curve.orders[o]) << ','
          << Num{*curve.accuracy[o][f]} << '\n';
    }
  }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

nlohmann::json read_json(const std::filesystem::path& path) {
  auto in = open_in(path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

}  // namespace chg
