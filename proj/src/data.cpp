#include "bnf/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "bnf/rng.hpp"

namespace bnf {

void TimeSeriesDataset::validate() const {
  if (samples.empty()) throw std::invalid_argument("dataset: empty");
  const Shape& s0 = samples.front().window.shape();
  for (const auto& s : samples) {
    if (!(s.window.shape() == s0)) throw std::invalid_argument("dataset: mixed window shapes");
    if (s.label < 0 || s.label >= class_count) {
      throw std::invalid_argument("dataset: label out of range");
    }
    if (s.window.bit_width() != bit_width) {
      throw std::invalid_argument("dataset: mixed bit widths");
    }
  }
}

std::vector<int> TimeSeriesDataset::subject_ids() const {
  std::set<int> ids;
  for (const auto& s : samples) ids.insert(s.subject);
  return std::vector<int>(ids.begin(), ids.end());
}

size_t TimeSeries::total_rows() const {
  size_t n = 0;
  for (const auto& seg : segments) n += seg.labels.size();
  return n;
}

namespace {

std::vector<std::string> split_row(const std::string& line, char delim) {
  std::vector<std::string> cells;
  if (delim == ',') {
    std::string cur;
    for (char c : line) {
      if (c == ',') {
        cells.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    cells.push_back(cur);
  } else {
    std::istringstream is(line);
    std::string tok;
    while (is >> tok) cells.push_back(tok);
  }
  return cells;
}

bool parse_cell(const std::string& cell, double* out) {
  std::string t = cell;
  // Trim ASCII whitespace.
  while (!t.empty() && std::isspace(static_cast<unsigned char>(t.front()))) t.erase(t.begin());
  while (!t.empty() && std::isspace(static_cast<unsigned char>(t.back()))) t.pop_back();
  if (t.empty()) return false;
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size()) return false;
  if (!std::isfinite(v)) return false;
  *out = v;
  return true;
}

}  // namespace

TimeSeries load_timeseries_csv(const std::string& path, const CsvColumnMap& map) {
  if (map.channel_columns.empty()) {
    throw std::invalid_argument("load_timeseries_csv: no channel columns mapped");
  }
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_timeseries_csv: cannot open " + path);

  int max_col = std::max(map.label_column, map.subject_column);
  for (int c : map.channel_columns) max_col = std::max(max_col, c);
  if (map.label_column < 0) throw std::invalid_argument("load_timeseries_csv: label column required");
  if (map.subject_column < 0) {
    throw std::invalid_argument("load_timeseries_csv: subject column required");
  }

  TimeSeries out;
  out.channels = static_cast<int>(map.channel_columns.size());

  std::string line;
  char delim = map.delimiter;
  bool first_data_line = true;
  TimeSeries::Segment* seg = nullptr;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (delim == '\0') delim = (line.find(',') != std::string::npos) ? ',' : ' ';
    const std::vector<std::string> cells = split_row(line, delim);
    if (first_data_line) {
      if (static_cast<int>(cells.size()) <= max_col) {
        throw std::invalid_argument("load_timeseries_csv: mapped column " +
                                    std::to_string(max_col) + " missing (row has " +
                                    std::to_string(cells.size()) + " columns)");
      }
      first_data_line = false;
    }
    if (static_cast<int>(cells.size()) <= max_col) {
      ++out.dropped_rows;
      continue;
    }
    double label_v, subject_v;
    if (!parse_cell(cells[static_cast<size_t>(map.label_column)], &label_v) ||
        !parse_cell(cells[static_cast<size_t>(map.subject_column)], &subject_v)) {
      ++out.dropped_rows;
      continue;
    }
    std::vector<double> row(map.channel_columns.size());
    bool ok = true;
    for (size_t i = 0; i < map.channel_columns.size(); ++i) {
      if (!parse_cell(cells[static_cast<size_t>(map.channel_columns[i])], &row[i])) {
        ok = false;
        break;
      }
    }
    if (!ok) {
      ++out.dropped_rows;
      continue;
    }
    const int subject = static_cast<int>(subject_v);
    if (!seg || seg->subject != subject) {
      out.segments.emplace_back();
      seg = &out.segments.back();
      seg->subject = subject;
    }
    seg->values.insert(seg->values.end(), row.begin(), row.end());
    seg->labels.push_back(static_cast<int>(label_v));
  }
  if (out.total_rows() == 0) {
    throw std::runtime_error("load_timeseries_csv: no usable rows in " + path +
                             " (dropped " + std::to_string(out.dropped_rows) + ")");
  }
  return out;
}

TimeSeriesDataset window(const TimeSeries& series, int length, int stride, double lo, double hi,
                         int bit_width, double sample_rate_hz) {
  if (length < 1 || stride < 1) throw std::invalid_argument("window: length and stride must be >= 1");
  TimeSeriesDataset ds;
  ds.bit_width = bit_width;
  ds.sample_rate_hz = sample_rate_hz;
  int max_label = 0;
  bool any_fit = false;
  for (const auto& seg : series.segments) {
    const int t_len = static_cast<int>(seg.labels.size());
    if (t_len >= length) any_fit = true;
    for (int start = 0; start + length <= t_len; start += stride) {
      Tensor win(Shape{static_cast<uint32_t>(series.channels), static_cast<uint32_t>(length), 1});
      for (int c = 0; c < series.channels; ++c) {
        for (int t = 0; t < length; ++t) {
          win.at3(c, t, 0) = seg.values[static_cast<size_t>(start + t) * series.channels + c];
        }
      }
      std::map<int, int> votes;
      for (int t = 0; t < length; ++t) ++votes[seg.labels[static_cast<size_t>(start + t)]];
      int best_label = votes.begin()->first;
      for (const auto& [lab, n] : votes) {
        if (n > votes[best_label]) best_label = lab;
      }
      TimeSeriesDataset::Sample s;
      s.window = to_fixed_point(win, lo, hi, bit_width);
      s.label = best_label;
      s.subject = seg.subject;
      max_label = std::max(max_label, best_label);
      ds.samples.push_back(std::move(s));
    }
  }
  if (!any_fit) throw std::invalid_argument("window: length exceeds every segment");
  if (ds.samples.empty()) throw std::invalid_argument("window: produced no windows");
  ds.class_count = max_label + 1;
  ds.validate();
  return ds;
}

void SynthSpec::validate() const {
  if (bit_width < 1 || bit_width > 16) throw std::invalid_argument("SynthSpec: M must be 1..16");
  if (channels < 1 || width < 1) throw std::invalid_argument("SynthSpec: window dims must be >= 1");
  if (samples_per_class < 1) throw std::invalid_argument("SynthSpec: samples_per_class >= 1");
  if (subjects < 1) throw std::invalid_argument("SynthSpec: subjects >= 1");
  if (bit_hi < 0 || bit_hi >= bit_width || bit_lo < 0 || bit_lo >= bit_width) {
    throw std::invalid_argument("SynthSpec: designated bits must be < M");
  }
  if (kind == Kind::BitParity && bit_hi == bit_lo) {
    throw std::invalid_argument("SynthSpec: parity bits must differ");
  }
}

TimeSeriesDataset generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 g(mix_seed(spec.seed, 0xb17f1e1dull));
  TimeSeriesDataset ds;
  ds.bit_width = spec.bit_width;
  ds.class_count = 2;
  ds.sample_rate_hz = 100.0;
  const uint16_t top = static_cast<uint16_t>((1u << spec.bit_width) - 1);
  const int total = 2 * spec.samples_per_class;
  for (int idx = 0; idx < total; ++idx) {
    const int cls = idx % 2;  // exact class balance by construction
    FixedTensor win(Shape{static_cast<uint32_t>(spec.channels),
                          static_cast<uint32_t>(spec.width), 1},
                    spec.bit_width);
    switch (spec.kind) {
      case SynthSpec::Kind::BitSeparable: {
        for (int c = 0; c < spec.channels; ++c) {
          for (int t = 0; t < spec.width; ++t) {
            uint16_t v = static_cast<uint16_t>(below(g, top + 1u));
            if (c == 0) {
              const uint16_t mask = static_cast<uint16_t>(1u << spec.bit_hi);
              v = cls ? static_cast<uint16_t>(v | mask) : static_cast<uint16_t>(v & ~mask);
            }
            win.set3(c, t, 0, v);
          }
        }
        break;
      }
      case SynthSpec::Kind::BitParity: {
        // Designated bits are window-constant on channel 0 so the class is
        // their XOR; everything else is noise.
        const int hi_bit = static_cast<int>(below(g, 2));
        const int lo_bit = hi_bit ^ cls;
        const uint16_t hi_mask = static_cast<uint16_t>(1u << spec.bit_hi);
        const uint16_t lo_mask = static_cast<uint16_t>(1u << spec.bit_lo);
        for (int c = 0; c < spec.channels; ++c) {
          for (int t = 0; t < spec.width; ++t) {
            uint16_t v = static_cast<uint16_t>(below(g, top + 1u));
            if (c == 0) {
              v = static_cast<uint16_t>(v & ~(hi_mask | lo_mask));
              if (hi_bit) v = static_cast<uint16_t>(v | hi_mask);
              if (lo_bit) v = static_cast<uint16_t>(v | lo_mask);
            }
            win.set3(c, t, 0, v);
          }
        }
        break;
      }
      case SynthSpec::Kind::Linear: {
        // Two blobs centered at 1/3 and 2/3 of the range.
        const double center = (cls ? 2.0 : 1.0) / 3.0 * top;
        const double sigma = 0.06 * top;
        for (int c = 0; c < spec.channels; ++c) {
          for (int t = 0; t < spec.width; ++t) {
            double v = std::round(center + sigma * normal(g));
            v = std::min(std::max(v, 0.0), static_cast<double>(top));
            win.set3(c, t, 0, static_cast<uint16_t>(v));
          }
        }
        break;
      }
    }
    TimeSeriesDataset::Sample s;
    s.window = std::move(win);
    s.label = cls;
    s.subject = idx % spec.subjects;
    ds.samples.push_back(std::move(s));
  }
  ds.validate();
  return ds;
}

SynthSpec parse_synth_uri(const std::string& uri) {
  const std::string prefix = "synth:";
  if (uri.rfind(prefix, 0) != 0) {
    throw std::invalid_argument("data spec must start with 'synth:', got " + uri);
  }
  std::string rest = uri.substr(prefix.size());
  std::string kind = rest;
  std::string query;
  const size_t q = rest.find('?');
  if (q != std::string::npos) {
    kind = rest.substr(0, q);
    query = rest.substr(q + 1);
  }
  SynthSpec spec;
  if (kind == "bit_separable") {
    spec.kind = SynthSpec::Kind::BitSeparable;
  } else if (kind == "bit_parity") {
    spec.kind = SynthSpec::Kind::BitParity;
    spec.bit_hi = 6;
    spec.bit_lo = 3;
  } else if (kind == "linear") {
    spec.kind = SynthSpec::Kind::Linear;
  } else {
    throw std::invalid_argument("unknown synthetic kind: " + kind);
  }
  std::istringstream qs(query);
  std::string kv;
  while (std::getline(qs, kv, '&')) {
    if (kv.empty()) continue;
    const size_t eq = kv.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("bad synth option: " + kv);
    const std::string key = kv.substr(0, eq);
    const long val = std::stol(kv.substr(eq + 1));
    if (key == "m") spec.bit_width = static_cast<int>(val);
    else if (key == "channels") spec.channels = static_cast<int>(val);
    else if (key == "width") spec.width = static_cast<int>(val);
    else if (key == "per_class") spec.samples_per_class = static_cast<int>(val);
    else if (key == "seed") spec.seed = static_cast<uint64_t>(val);
    else if (key == "bit_hi") spec.bit_hi = static_cast<int>(val);
    else if (key == "bit_lo") spec.bit_lo = static_cast<int>(val);
    else throw std::invalid_argument("unknown synth option: " + key);
  }
  spec.validate();
  return spec;
}

}  // namespace bnf
