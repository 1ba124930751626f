#include "skl/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "skl/rng.hpp"

namespace skl {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

bool parse_float(const std::string& s, float& out) {
  const char* begin = s.c_str();
  char* end = nullptr;
  out = std::strtof(begin, &end);
  if (end == begin) return false;
  while (*end == ' ' || *end == '\t' || *end == '\r') ++end;
  return *end == '\0';
}

Dataset make_blob_split(const std::string& name, int count,
                        const std::vector<std::vector<float>>& centers,
                        float sigma, Rng& rng) {
  const int c = static_cast<int>(centers.size());
  const int d = static_cast<int>(centers.front().size());
  Dataset ds;
  ds.name = name;
  ds.num_classes = c;
  ds.features = Matrix(count, d);
  ds.labels.resize(count);
  ds.label_values.resize(c);
  for (int k = 0; k < c; ++k) ds.label_values[k] = k;
  for (int s = 0; s < count; ++s) {
    const int cls = s % c;  // round-robin keeps classes balanced within +-1
    ds.labels[s] = cls;
    for (int j = 0; j < d; ++j)
      ds.features(s, j) = centers[cls][j] + sigma * rng.gaussian();
  }
  return ds;
}

std::vector<float> random_direction(int dim, float norm, Rng& rng) {
  std::vector<float> v(dim);
  double len2 = 0.0;
  for (auto& x : v) {
    x = rng.gaussian();
    len2 += static_cast<double>(x) * x;
  }
  const auto scale = static_cast<float>(norm / std::sqrt(len2));
  for (auto& x : v) x *= scale;
  return v;
}

}  // namespace

Dataset load_csv(const std::string& path, int label_column) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset file: " + path);

  std::vector<std::vector<float>> feature_rows;
  std::vector<int> raw_labels;
  std::string line;
  int line_no = 0;
  int num_cols = -1;
  bool first_data_line = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto cells = split_line(line);
    if (first_data_line) {
      // A non-numeric first line is treated as a header.
      float tmp;
      bool numeric = true;
      for (const auto& c : cells)
        if (!parse_float(c, tmp)) {
          numeric = false;
          break;
        }
      first_data_line = false;
      if (!numeric) continue;
    }
    if (num_cols < 0) {
      num_cols = static_cast<int>(cells.size());
      if (num_cols < 2)
        throw IoError(path + ": row " + std::to_string(line_no) +
                      ": need at least one feature and a label column");
    } else if (static_cast<int>(cells.size()) != num_cols) {
      throw IoError(path + ": row " + std::to_string(line_no) + ": has " +
                    std::to_string(cells.size()) + " columns, expected " +
                    std::to_string(num_cols));
    }
    int lc = label_column < 0 ? num_cols + label_column : label_column;
    if (lc < 0 || lc >= num_cols)
      throw IoError(path + ": label column " + std::to_string(label_column) +
                    " out of range for " + std::to_string(num_cols) +
                    " columns");
    std::vector<float> row;
    row.reserve(num_cols - 1);
    int label = 0;
    for (int j = 0; j < num_cols; ++j) {
      float v;
      if (!parse_float(cells[j], v))
        throw IoError(path + ": row " + std::to_string(line_no) + ", column " +
                      std::to_string(j + 1) + ": not a number: '" + cells[j] +
                      "'");
      if (j == lc) {
        if (v != std::floor(v))
          throw IoError(path + ": row " + std::to_string(line_no) +
                        ": label must be integral, got '" + cells[j] + "'");
        label = static_cast<int>(v);
      } else {
        if (!std::isfinite(v))
          throw IoError(path + ": row " + std::to_string(line_no) +
                        ": non-finite feature value");
        row.push_back(v);
      }
    }
    feature_rows.push_back(std::move(row));
    raw_labels.push_back(label);
  }
  if (feature_rows.empty()) throw IoError(path + ": no data rows");

  // Remap labels to contiguous 0..C-1 in ascending original order.
  std::map<int, int> remap;
  for (int v : raw_labels) remap.emplace(v, 0);
  int next = 0;
  for (auto& [_, idx] : remap) idx = next++;

  Dataset ds;
  ds.name = path;
  ds.num_classes = next;
  ds.label_values.resize(next);
  for (const auto& [orig, idx] : remap) ds.label_values[idx] = orig;
  const int s = static_cast<int>(feature_rows.size());
  const int d = static_cast<int>(feature_rows.front().size());
  ds.features = Matrix(s, d);
  ds.labels.resize(s);
  for (int i = 0; i < s; ++i) {
    for (int j = 0; j < d; ++j) ds.features(i, j) = feature_rows[i][j];
    ds.labels[i] = remap[raw_labels[i]];
  }
  return ds;
}

void save_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write dataset file: " + path);
  char buf[32];
  for (int i = 0; i < ds.num_samples(); ++i) {
    std::string line;
    for (int j = 0; j < ds.feature_dim(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.9g",
                    static_cast<double>(ds.features(i, j)));
      line += buf;
      line += ',';
    }
    const int orig = ds.label_values.empty() ? ds.labels[i]
                                             : ds.label_values[ds.labels[i]];
    line += std::to_string(orig);
    line += '\n';
    out << line;
  }
  if (!out) throw IoError("write failed: " + path);
}

DriftDatasets gen_drifted(const DriftSpec& spec) {
  if (spec.num_classes < 2) throw ContractError("gen_drifted: need >= 2 classes");
  if (spec.feature_dim < 1) throw ContractError("gen_drifted: need >= 1 feature");
  if (spec.pretrain_samples < spec.num_classes ||
      spec.finetune_samples < spec.num_classes ||
      spec.test_samples < spec.num_classes)
    throw ContractError("gen_drifted: every split needs at least one sample "
                        "per class");

  Rng rng(spec.seed, /*stream=*/7);
  std::vector<std::vector<float>> centers, drifted;
  for (int c = 0; c < spec.num_classes; ++c)
    centers.push_back(random_direction(spec.feature_dim, spec.separation, rng));
  // The shift runs from each center toward (and with the default magnitude,
  // past) the next class's center. A random shift direction would be nearly
  // orthogonal to the span of the centers at high feature counts and leave
  // the old decision boundaries intact.
  for (int c = 0; c < spec.num_classes; ++c) {
    const auto& from = centers[c];
    const auto& to = centers[(c + 1) % spec.num_classes];
    double len2 = 0.0;
    for (int j = 0; j < spec.feature_dim; ++j) {
      const double d = static_cast<double>(to[j]) - from[j];
      len2 += d * d;
    }
    const auto scale =
        static_cast<float>(spec.drift_shift / std::sqrt(len2));
    auto moved = from;
    for (int j = 0; j < spec.feature_dim; ++j)
      moved[j] += scale * (to[j] - from[j]);
    drifted.push_back(std::move(moved));
  }

  DriftDatasets out;
  out.pretrain = make_blob_split("pretrain", spec.pretrain_samples, centers,
                                 spec.noise_sigma, rng);
  const float drift_sigma = spec.noise_sigma * spec.drift_noise_mult;
  out.finetune = make_blob_split("finetune", spec.finetune_samples, drifted,
                                 drift_sigma, rng);
  out.test =
      make_blob_split("test", spec.test_samples, drifted, drift_sigma, rng);
  return out;
}

NormStats normalize(Dataset& train, const std::vector<Dataset*>& others) {
  const int d = train.feature_dim();
  const int s = train.num_samples();
  NormStats st;
  st.mean.assign(d, 0.0f);
  st.std_dev.assign(d, 0.0f);
  for (int j = 0; j < d; ++j) {
    double sum = 0.0;
    for (int i = 0; i < s; ++i) sum += train.features(i, j);
    const double mu = sum / s;
    double var = 0.0;
    for (int i = 0; i < s; ++i) {
      const double dlt = train.features(i, j) - mu;
      var += dlt * dlt;
    }
    st.mean[j] = static_cast<float>(mu);
    st.std_dev[j] = static_cast<float>(std::sqrt(var / s));
  }
  auto apply = [&](Dataset& ds) {
    if (ds.feature_dim() != d)
      throw ContractError("normalize: feature dim mismatch");
    for (int j = 0; j < d; ++j)
      for (int i = 0; i < ds.num_samples(); ++i)
        ds.features(i, j) =
            st.std_dev[j] > 0.0f
                ? (ds.features(i, j) - st.mean[j]) / st.std_dev[j]
                : 0.0f;
  };
  apply(train);
  for (Dataset* ds : others) apply(*ds);
  return st;
}

}  // namespace skl
