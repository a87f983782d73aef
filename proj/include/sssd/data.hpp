#pragma once

// Records, datasets, the on-disk dataset format, the fold protocol and the toy generator.
//
// Dataset directory:
//   meta.csv   - "# leads=I;II" and "# labels=AFIB" header lines, then a CSV table
//                id,fold,fs,n_leads,length,labels,source   (labels are ';'-separated bits)
//   <id>.f32   - little-endian float32, row-major n_leads x length

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sssd/conditioning.hpp"
#include "sssd/rng.hpp"
#include "sssd/tensor.hpp"

namespace sssd {

struct EcgRecord {
  std::string id;
  Signal signal;  // leads x length, millivolts
  double fs = 0.0;
  LabelVector labels;
  int fold = 1;
  std::string source_id;  // set on synthetic records: the real record they copy

  int leads() const { return static_cast<int>(signal.rows()); }
  int length() const { return static_cast<int>(signal.cols()); }
  bool positive(int label_index) const { return labels[label_index] == 1; }
};

struct Dataset {
  std::vector<EcgRecord> records;
  std::vector<std::string> label_names;
  std::vector<std::string> lead_names;
  double fs = 0.0;
  std::string name;  // report tag, not persisted

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
  int num_labels() const { return static_cast<int>(label_names.size()); }
  int leads() const { return static_cast<int>(lead_names.size()); }
  int length() const { return records.empty() ? 0 : records.front().length(); }

  /// Dataset with the same metadata and no records.
  Dataset empty_like() const {
    Dataset d;
    d.label_names = label_names;
    d.lead_names = lead_names;
    d.fs = fs;
    d.name = name;
    return d;
  }

  void validate() const {
    std::set<std::string> ids;
    for (const auto& r : records) {
      if (r.id.empty() || r.id.find_first_of(",/\\\n") != std::string::npos)
        throw std::invalid_argument("invalid record id '" + r.id + "'");
      if (!ids.insert(r.id).second) throw std::invalid_argument("duplicate record id '" + r.id + "'");
      if (r.fold < 1 || r.fold > 10)
        throw std::invalid_argument("record " + r.id + ": fold " + std::to_string(r.fold) + " outside 1..10");
      if (r.leads() != leads())
        throw std::invalid_argument("record " + r.id + ": " + std::to_string(r.leads()) + " leads, dataset has " +
                                    std::to_string(leads()));
      if (r.length() != length()) throw std::invalid_argument("record " + r.id + ": inconsistent length");
      if (r.labels.size() != num_labels())
        throw std::invalid_argument("record " + r.id + ": label vector length != " + std::to_string(num_labels()));
      if (r.fs != fs) throw std::invalid_argument("record " + r.id + ": sampling rate differs from dataset");
    }
  }

  int count_positive(int label_index) const {
    int n = 0;
    for (const auto& r : records) n += r.positive(label_index) ? 1 : 0;
    return n;
  }
};

// ---------------------------------------------------------------------------------------------
// On-disk format

namespace detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(item);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

inline std::string join(const std::vector<std::string>& xs, char sep) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += sep;
    out += xs[i];
  }
  return out;
}

inline std::string format_number(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

inline std::string encode_labels(const LabelVector& y) {
  std::string out;
  for (int i = 0; i < y.size(); ++i) {
    if (i) out += ';';
    out += y[i] == LabelVector::kPad ? "P" : std::to_string(static_cast<int>(y[i]));
  }
  return out;
}

inline LabelVector decode_labels(const std::string& s) {
  std::vector<std::int8_t> v;
  if (s.empty()) return LabelVector(v);
  for (const auto& tok : split(s, ';')) {
    if (tok == "0") v.push_back(0);
    else if (tok == "1") v.push_back(1);
    else if (tok == "P") v.push_back(LabelVector::kPad);
    else throw std::invalid_argument("bad label token '" + tok + "'");
  }
  return LabelVector(v);
}

inline void write_f32(const std::filesystem::path& path, const Signal& s) {
  std::vector<char> bytes;
  bytes.reserve(static_cast<std::size_t>(s.size()) * 4);
  for (Eigen::Index c = 0; c < s.rows(); ++c)
    for (Eigen::Index l = 0; l < s.cols(); ++l) {
      const auto u = std::bit_cast<std::uint32_t>(s(c, l));
      for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<char>((u >> (8 * b)) & 0xFFu));
    }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline Signal read_f32(const std::filesystem::path& path, int leads, int length) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t expected = static_cast<std::size_t>(leads) * static_cast<std::size_t>(length) * 4;
  if (bytes.size() != expected)
    throw std::invalid_argument(path.string() + ": payload has " + std::to_string(bytes.size()) + " bytes, expected " +
                                std::to_string(expected));
  Signal s(leads, length);
  std::size_t k = 0;
  for (int c = 0; c < leads; ++c)
    for (int l = 0; l < length; ++l) {
      std::uint32_t u = 0;
      for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[k++])) << (8 * b);
      s(c, l) = std::bit_cast<float>(u);
    }
  return s;
}

}  // namespace detail

inline const std::vector<std::string>& known_lead_names() {
  static const std::vector<std::string> names{"I",  "II", "III", "aVR", "aVL", "aVF", "V1",
                                              "V2", "V3", "V4",  "V5",  "V6"};
  return names;
}

/// Writes meta.csv and one payload per record. The directory is created if needed.
inline void save_dataset(const Dataset& d, const std::filesystem::path& dir) {
  d.validate();
  std::filesystem::create_directories(dir);
  std::ofstream meta(dir / "meta.csv");
  if (!meta) throw std::runtime_error("cannot write " + (dir / "meta.csv").string());
  meta << "# leads=" << detail::join(d.lead_names, ';') << "\n";
  meta << "# labels=" << detail::join(d.label_names, ';') << "\n";
  meta << "id,fold,fs,n_leads,length,labels,source\n";
  for (const auto& r : d.records) {
    meta << r.id << ',' << r.fold << ',' << detail::format_number(r.fs) << ',' << r.leads() << ',' << r.length()
         << ',' << detail::encode_labels(r.labels) << ',' << r.source_id << "\n";
    detail::write_f32(dir / (r.id + ".f32"), r.signal);
  }
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream meta(dir / "meta.csv");
  if (!meta) throw std::runtime_error("no meta.csv in " + dir.string());
  Dataset d;
  bool have_leads = false, have_labels = false, have_header = false;
  std::string line;
  int line_no = 0;
  while (std::getline(meta, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto where = [&] { return "meta.csv line " + std::to_string(line_no) + ": "; };
    if (line.rfind("# leads=", 0) == 0) {
      d.lead_names = detail::split(line.substr(8), ';');
      for (const auto& name : d.lead_names) {
        const auto& known = known_lead_names();
        if (std::find(known.begin(), known.end(), name) == known.end())
          throw std::invalid_argument(where() + "unknown lead name '" + name + "'");
      }
      have_leads = true;
      continue;
    }
    if (line.rfind("# labels=", 0) == 0) {
      auto rest = line.substr(9);
      d.label_names = rest.empty() ? std::vector<std::string>{} : detail::split(rest, ';');
      have_labels = true;
      continue;
    }
    if (line[0] == '#') continue;
    if (!have_header) {
      if (line.rfind("id,fold,fs,n_leads,length,labels", 0) != 0)
        throw std::invalid_argument(where() + "unexpected table header");
      have_header = true;
      continue;
    }
    auto f = detail::split(line, ',');
    if (f.size() != 6 && f.size() != 7) throw std::invalid_argument(where() + "expected 6 or 7 fields");
    EcgRecord r;
    try {
      r.id = f[0];
      r.fold = std::stoi(f[1]);
      r.fs = std::stod(f[2]);
      const int leads = std::stoi(f[3]);
      const int length = std::stoi(f[4]);
      r.labels = detail::decode_labels(f[5]);
      if (f.size() == 7) r.source_id = f[6];
      if (leads < 1 || length < 1) throw std::invalid_argument("non-positive shape");
      if (have_leads && leads != static_cast<int>(d.lead_names.size()))
        throw std::invalid_argument("n_leads does not match the lead header");
      if (r.fold < 1 || r.fold > 10) throw std::invalid_argument("fold " + f[1] + " outside 1..10");
      r.signal = detail::read_f32(dir / (r.id + ".f32"), leads, length);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(where() + e.what());
    }
    d.records.push_back(std::move(r));
  }
  if (!have_leads || !have_labels || !have_header)
    throw std::invalid_argument(dir.string() + "/meta.csv: missing leads/labels header or table header");
  if (!d.records.empty()) d.fs = d.records.front().fs;
  d.name = std::filesystem::absolute(dir).lexically_normal().filename().string();
  if (d.name.empty()) d.name = std::filesystem::absolute(dir).lexically_normal().parent_path().filename().string();
  d.validate();
  return d;
}

// ---------------------------------------------------------------------------------------------
// Fold protocol

struct FoldSplit {
  Dataset train;  // folds 1-8
  Dataset val;    // fold 9
  Dataset test;   // fold 10
  std::vector<std::string> warnings;
};

inline FoldSplit split_folds(const Dataset& d) {
  FoldSplit s{d.empty_like(), d.empty_like(), d.empty_like(), {}};
  for (const auto& r : d.records) {
    if (r.fold <= 8) s.train.records.push_back(r);
    else if (r.fold == 9) s.val.records.push_back(r);
    else s.test.records.push_back(r);
  }
  auto warn = [&](const Dataset& part, const char* name) {
    if (part.empty()) s.warnings.push_back(std::string("empty ") + name + " split");
  };
  warn(s.train, "train");
  warn(s.val, "validation");
  warn(s.test, "test");
  for (const auto& w : s.warnings) std::cerr << "warning: " << w << "\n";
  return s;
}

inline Dataset concat(const Dataset& a, const Dataset& b) {
  Dataset out = a;
  out.records.insert(out.records.end(), b.records.begin(), b.records.end());
  return out;
}

// ---------------------------------------------------------------------------------------------
// Toy generator

struct ToyOptions {
  double fs = 50.0;
  int length = 256;
  double noise_mv = 0.02;
};

/// Quasi-periodic two-lead surrogate ECG.
///   class 0: regular rhythm with P waves (neutral, all labels 0)
///   class 1: irregular RR intervals, no P waves, fibrillatory baseline (label 0 set)
///   class 2: regular rhythm with widened QRS complexes (label 1 set)
/// Record i belongs to class i % classes; folds are assigned round-robin within each class.
inline Dataset make_toy_dataset_total(int n, int classes, std::uint64_t seed, const ToyOptions& opt = {}) {
  if (classes < 2 || classes > 3) throw std::invalid_argument("toy dataset supports 2 or 3 classes");
  if (n < 0) throw std::invalid_argument("toy dataset size must be non-negative");
  static const char* kLabelNames[] = {"AFIB", "WQRS"};
  Dataset d;
  d.name = "toy";
  d.fs = opt.fs;
  d.lead_names = {"I", "II"};
  for (int k = 1; k < classes; ++k) d.label_names.emplace_back(kLabelNames[k - 1]);

  Rng rng(seed);
  const double dt = 1.0 / opt.fs;
  for (int i = 0; i < n; ++i) {
    const int cls = i % classes;
    Rng rec(rng.split());
    const double rr0 = 60.0 / rec.uniform(60.0, 100.0);
    const double gain[2] = {rec.uniform(0.4, 0.8), rec.uniform(0.8, 1.2)};
    const double qrs_amp = rec.uniform(0.8, 1.2);
    const double qrs_sd = cls == 2 ? 0.06 : 0.02;
    const double f_freq = rec.uniform(5.0, 7.0);
    const double f_phase = rec.uniform(0.0, 2 * M_PI);

    std::vector<double> beats;
    double tb = rec.uniform(0.0, rr0);
    const double duration = opt.length * dt;
    while (tb < duration + 0.5) {
      beats.push_back(tb);
      tb += cls == 1 ? rr0 * rec.uniform(0.5, 1.5) : rr0 * (1.0 + 0.02 * rec.normal());
    }

    Signal s = Signal::Zero(2, opt.length);
    for (int l = 0; l < opt.length; ++l) {
      const double t = l * dt;
      double v = 0.0;
      for (double b : beats) {
        auto bump = [&](double center, double sd, double amp) {
          const double z = (t - center) / sd;
          return std::abs(z) > 6 ? 0.0 : amp * std::exp(-0.5 * z * z);
        };
        v += bump(b, qrs_sd, qrs_amp);
        v += bump(b + 0.28, 0.06, 0.25);
        if (cls != 1) v += bump(b - 0.16, 0.03, 0.15);
      }
      if (cls == 1) v += 0.15 * std::sin(2 * M_PI * f_freq * t + f_phase);
      for (int c = 0; c < 2; ++c) {
        const double x = gain[c] * v + opt.noise_mv * rec.normal();
        s(c, l) = static_cast<float>(std::clamp(x, -3.0, 3.0));
      }
    }

    EcgRecord r;
    char id[32];
    std::snprintf(id, sizeof id, "rec%05d", i);
    r.id = id;
    r.signal = std::move(s);
    r.fs = opt.fs;
    r.labels = LabelVector::zeros(classes - 1);
    if (cls > 0) r.labels = r.labels.with(cls - 1, 1);
    r.fold = (i / classes) % 10 + 1;
    d.records.push_back(std::move(r));
  }
  return d;
}

inline Dataset make_toy_dataset(int n_per_class, int classes, std::uint64_t seed, const ToyOptions& opt = {}) {
  return make_toy_dataset_total(n_per_class * classes, classes, seed, opt);
}

// ---------------------------------------------------------------------------------------------
// Augmentation

enum class AugmentMode { baseline, double_positives, synth_aug };

inline std::string to_string(AugmentMode m) {
  switch (m) {
    case AugmentMode::baseline: return "baseline";
    case AugmentMode::double_positives: return "double";
    case AugmentMode::synth_aug: return "synth_aug";
  }
  return "?";
}

inline AugmentMode parse_augment_mode(const std::string& s) {
  if (s == "baseline") return AugmentMode::baseline;
  if (s == "double") return AugmentMode::double_positives;
  if (s == "synth_aug") return AugmentMode::synth_aug;
  throw std::invalid_argument("unknown augmentation mode '" + s + "' (expected baseline|double|synth_aug)");
}

/// Adds positive training records (folds 1-8). Validation and test folds are never touched.
inline Dataset augment_with_positives(const Dataset& d, const Dataset& synth, AugmentMode mode, int label_index) {
  if (label_index < 0 || label_index >= d.num_labels()) throw std::invalid_argument("label index out of range");
  Dataset out = d;
  if (mode == AugmentMode::baseline) return out;
  if (mode == AugmentMode::double_positives) {
    for (const auto& r : d.records)
      if (r.fold <= 8 && r.positive(label_index)) {
        EcgRecord copy = r;
        copy.id = r.id + "_dup";
        copy.source_id = r.id;
        out.records.push_back(std::move(copy));
      }
    return out;
  }
  std::set<std::string> real_positive;
  for (const auto& r : d.records)
    if (r.fold <= 8 && r.positive(label_index)) real_positive.insert(r.id);
  for (const auto& s : synth.records) {
    if (s.fold > 8 || !s.positive(label_index)) continue;
    if (!real_positive.count(s.source_id))
      throw std::invalid_argument("synthetic record " + s.id + " is not aligned to a positive training record");
    out.records.push_back(s);
  }
  out.validate();
  return out;
}

}  // namespace sssd
