#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bnf/tensor.hpp"

namespace bnf {

// Windowed dataset. Windows are fixed-point tensors of shape C x T x 1
// (sensor channels as rows, time as columns).
struct TimeSeriesDataset {
  struct Sample {
    FixedTensor window;
    int label = 0;
    int subject = 0;
  };
  std::vector<Sample> samples;
  double sample_rate_hz = 0.0;
  int class_count = 0;
  int bit_width = 0;

  void validate() const;
  std::vector<int> subject_ids() const;  // sorted, unique
};

// Raw multi-channel recording split into per-subject runs, in file order.
struct TimeSeries {
  struct Segment {
    int subject = 0;
    std::vector<double> values;  // T x C, row-major
    std::vector<int> labels;     // length T
  };
  int channels = 0;
  std::vector<Segment> segments;
  size_t dropped_rows = 0;

  size_t total_rows() const;
};

struct CsvColumnMap {
  std::vector<int> channel_columns;
  int label_column = -1;
  int subject_column = -1;
  // '\0' auto-detects: comma if the first line contains one, else whitespace.
  char delimiter = '\0';
};

// Parses rows into channels. Rows with missing or unparsable cells in any
// mapped column are dropped and counted. An empty result is rejected.
TimeSeries load_timeseries_csv(const std::string& path, const CsvColumnMap& map);

// Sliding windows per subject segment; a window never crosses segments.
// The window label is the majority label inside it (ties break to the
// smaller class id). Values are quantized to M bits over [lo, hi].
TimeSeriesDataset window(const TimeSeries& series, int length, int stride, double lo, double hi,
                         int bit_width, double sample_rate_hz = 0.0);

struct SynthSpec {
  enum class Kind { BitSeparable, BitParity, Linear };
  Kind kind = Kind::BitSeparable;
  int bit_width = 8;       // M
  int channels = 1;        // sensor rows (window height)
  int width = 16;          // samples per window
  int samples_per_class = 500;
  uint64_t seed = 0;
  // Designated bits of channel 0. BitSeparable uses bit_hi; BitParity uses
  // the pair (bit_hi, bit_lo).
  int bit_hi = 7;
  int bit_lo = 4;
  int subjects = 8;

  void validate() const;
};

// Deterministic two-class generators.
//  - BitSeparable: bit_hi of every channel-0 value equals the class.
//  - BitParity: class = bit_hi XOR bit_lo of channel 0 (bits held constant
//    inside a window, all other bits random). One shared sign per channel
//    cannot express this, per-bit signs can.
//  - Linear: two Gaussian blobs separated along the value range.
TimeSeriesDataset generate_synthetic(const SynthSpec& spec);

// "synth:bit_separable", "synth:bit_parity", "synth:linear" with optional
// "?key=value&..." overrides (m, channels, width, per_class, seed).
SynthSpec parse_synth_uri(const std::string& uri);

}  // namespace bnf
