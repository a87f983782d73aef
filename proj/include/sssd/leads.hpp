#pragma once

// Limb-lead algebra. Of the 12 standard leads only I, II and V1..V6 are independent;
// III, aVR, aVL and aVF follow from I and II:
//   III = II - I,  aVR = -(I + II)/2,  aVL = I - II/2,  aVF = II - I/2.

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

#include "sssd/tensor.hpp"

namespace sssd {

inline const std::vector<std::string>& twelve_lead_names() {
  static const std::vector<std::string> names{"I", "II", "III", "aVR", "aVL", "aVF",
                                              "V1", "V2", "V3", "V4", "V5", "V6"};
  return names;
}

inline const std::vector<std::string>& independent_lead_names() {
  static const std::vector<std::string> names{"I", "II", "V1", "V2", "V3", "V4", "V5", "V6"};
  return names;
}

/// Channel-named signal. Rows follow `names`.
struct LeadSet {
  std::vector<std::string> names;
  Signal signal;

  int index_of(const std::string& lead) const {
    auto it = std::find(names.begin(), names.end(), lead);
    if (it == names.end()) throw std::invalid_argument("lead '" + lead + "' is missing");
    return static_cast<int>(it - names.begin());
  }
  auto lead(const std::string& name) const { return signal.row(index_of(name)); }
};

/// Keeps I, II, V1..V6 from a 12-lead set, in that order.
inline LeadSet reduce_to_independent(const LeadSet& full) {
  if (static_cast<Eigen::Index>(full.names.size()) != full.signal.rows())
    throw std::invalid_argument("lead set: name count does not match signal rows");
  LeadSet out{independent_lead_names(), Signal(8, full.signal.cols())};
  for (const auto& name : twelve_lead_names()) full.index_of(name);  // all 12 must be present
  for (int i = 0; i < 8; ++i) out.signal.row(i) = full.lead(out.names[static_cast<std::size_t>(i)]);
  return out;
}

/// Emits the 12 standard leads. Any precordial leads absent from the input are omitted,
/// so a limb-only set {I, II} expands to the six limb leads.
inline LeadSet reconstruct_full(const LeadSet& reduced) {
  if (static_cast<Eigen::Index>(reduced.names.size()) != reduced.signal.rows())
    throw std::invalid_argument("lead set: name count does not match signal rows");
  const auto I = reduced.lead("I");
  const auto II = reduced.lead("II");
  std::vector<std::string> names{"I", "II", "III", "aVR", "aVL", "aVF"};
  for (const auto& v : {"V1", "V2", "V3", "V4", "V5", "V6"})
    if (std::find(reduced.names.begin(), reduced.names.end(), v) != reduced.names.end()) names.emplace_back(v);
  LeadSet out{names, Signal(static_cast<Eigen::Index>(names.size()), reduced.signal.cols())};
  out.signal.row(0) = I;
  out.signal.row(1) = II;
  out.signal.row(2) = II - I;
  out.signal.row(3) = -(I + II) * 0.5f;
  out.signal.row(4) = I - II * 0.5f;
  out.signal.row(5) = II - I * 0.5f;
  for (std::size_t k = 6; k < names.size(); ++k) out.signal.row(static_cast<Eigen::Index>(k)) = reduced.lead(names[k]);
  return out;
}

}  // namespace sssd
