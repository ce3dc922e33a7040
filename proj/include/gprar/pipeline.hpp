#pragma once

#include "gprar/aggregator.hpp"
#include "gprar/prar.hpp"

#include <optional>
#include <string>
#include <string_view>

namespace gprar {

/// Input features handed to the aggregator. Codes: X (raw location),
/// XR (reconstructed location), P (raw pose), PR (reconstructed pose),
/// C (grid flow), A (action feature).
struct FeatureSet {
  enum class Source { None, Raw, Reconstructed };

  Source location = Source::Reconstructed;
  Source pose = Source::Reconstructed;
  bool grid = true;
  bool action = true;

  static FeatureSet full() { return {}; }
  /// "XR+PR+C+A" style; order is free, each code at most once.
  static FeatureSet parse(std::string_view text);
  std::string to_string() const;

  StreamSet streams() const { return {grid, pose != Source::None, location != Source::None, action}; }
  bool needs_prar() const { return action || location == Source::Reconstructed || pose == Source::Reconstructed; }

  friend bool operator==(const FeatureSet&, const FeatureSet&) = default;
};

/// Aggregator configuration matching a PRAR model's window and widths.
FaConfig fa_config_for(const PrarConfig& prar, const FeatureSet& features, FaConfig base = {});

/// Values of a PRAR pass over one observation window.
struct PrarOutputs {
  PoseFrame frame;
  RowMatrix<double> reconstructed;  // (T*K) x 3, pose frame
  RowMatrix<double> action;         // T x C_act
};

PrarOutputs run_prar(const PrarModel& prar, const SkeletonSequence& observed);

struct PredictionInputs {
  FaStreams streams;  // aggregator inputs before stream standardization
  FaFrame frame;
  /// Movement of the frame anchor in normalized units, 1 x 2. Its value is
  /// zero; it carries the anchor's dependence on the parameters when the
  /// anchor comes from the reconstruction.
  std::optional<Var> anchor_delta;
};

/// Records observation -> PRAR -> aggregator input streams on the tape.
PredictionInputs build_streams(Tape& tape, const PrarModel& prar, const FaModel& fa, const FeatureSet& features,
                               const SkeletonSequence& observed, const GridFlow& grid,
                               const PrarOutputs* cached = nullptr);

struct PredictionVars {
  Var predicted;  // horizon x 2 in the aggregator frame
  FaFrame frame;
  std::optional<Var> anchor_delta;  // see PredictionInputs
};

/// Pixel trajectory expressed in the prediction's frame, following the
/// frame's anchor when that anchor depends on the parameters.
Var frame_target(Tape& tape, const PredictionVars& prediction, const Trajectory& pixels);

/// Records observation -> PRAR -> aggregator -> trajectory on the tape. With
/// `cached` the PRAR outputs enter as constants instead of being recomputed.
PredictionVars build_prediction(Tape& tape, const PrarModel& prar, const FaModel& fa, const FeatureSet& features,
                                const SkeletonSequence& observed, const GridFlow& grid,
                                const PrarOutputs* cached = nullptr);

/// Pixel trajectory for one observation window.
Trajectory predict_trajectory(const PrarModel& prar, const FaModel& fa, const FeatureSet& features,
                              const SkeletonSequence& observed, const GridFlow& grid);

}  // namespace gprar
