#include "gprar/pipeline.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace gprar {

FeatureSet FeatureSet::parse(std::string_view text) {
  FeatureSet f;
  f.location = Source::None;
  f.pose = Source::None;
  f.grid = false;
  f.action = false;
  std::vector<std::string> seen;
  std::stringstream ss{std::string(text)};
  std::string code;
  const auto set_source = [&](Source& slot, Source value, const std::string& name) {
    if (slot != Source::None) throw std::invalid_argument("feature set '" + std::string(text) + "': '" + name +
                                                          "' conflicts with another location/pose code");
    slot = value;
  };
  while (std::getline(ss, code, '+')) {
    if (std::find(seen.begin(), seen.end(), code) != seen.end())
      throw std::invalid_argument("feature set '" + std::string(text) + "': duplicate code '" + code + "'");
    seen.push_back(code);
    if (code == "X") set_source(f.location, Source::Raw, code);
    else if (code == "XR") set_source(f.location, Source::Reconstructed, code);
    else if (code == "P") set_source(f.pose, Source::Raw, code);
    else if (code == "PR") set_source(f.pose, Source::Reconstructed, code);
    else if (code == "C") f.grid = true;
    else if (code == "A") f.action = true;
    else throw std::invalid_argument("unknown feature code '" + code + "' in '" + std::string(text) + "'");
  }
  if (seen.empty()) throw std::invalid_argument("feature set: empty");
  return f;
}

std::string FeatureSet::to_string() const {
  std::vector<std::string> parts;
  if (location == Source::Raw) parts.push_back("X");
  if (location == Source::Reconstructed) parts.push_back("XR");
  if (pose == Source::Raw) parts.push_back("P");
  if (pose == Source::Reconstructed) parts.push_back("PR");
  if (grid) parts.push_back("C");
  if (action) parts.push_back("A");
  std::string out;
  for (const auto& p : parts) out += (out.empty() ? "" : "+") + p;
  return out;
}

FaConfig fa_config_for(const PrarConfig& prar, const FeatureSet& features, FaConfig base) {
  base.frames = prar.frames;
  base.joints = build_layout(prar.layout).joint_count();
  base.action_channels = prar.action_widths.back();
  base.streams = features.streams();
  base.validate();
  return base;
}

PrarOutputs run_prar(const PrarModel& prar, const SkeletonSequence& observed) {
  PrarOutputs out;
  out.frame = prar.frame_of(observed);
  Tape tape(&prar.params());
  const auto vars = prar.forward(tape, tape.constant(prar.input_of(observed)));
  out.reconstructed = vars.reconstructed.value();
  out.action = vars.action_feature.value();
  return out;
}

PredictionInputs build_streams(Tape& tape, const PrarModel& prar, const FaModel& fa, const FeatureSet& features,
                               const SkeletonSequence& observed, const GridFlow& grid, const PrarOutputs* cached) {
  using Source = FeatureSet::Source;
  const SkeletonLayout& layout = prar.layout();
  const Index frames = prar.config().frames;
  const Index joints = layout.joint_count();
  if (observed.frames() != frames || grid.frames() != frames)
    throw std::invalid_argument("prediction: observation and grid flow must span " + std::to_string(frames) + " frames");
  if (fa.config().streams != features.streams())
    throw std::invalid_argument("prediction: aggregator streams do not match feature set " + features.to_string());

  const bool need_recon = features.location == Source::Reconstructed || features.pose == Source::Reconstructed;
  PoseFrame pose_frame;
  std::optional<Var> recon, action;
  if (cached != nullptr) {
    pose_frame = cached->frame;
    if (need_recon) recon = tape.constant(cached->reconstructed);
    if (features.action) action = tape.constant(cached->action);
  } else if (features.needs_prar()) {
    pose_frame = prar.frame_of(observed);
    const Var encoded = prar.encode(tape, tape.constant(prar.input_of(observed)));
    if (need_recon) recon = prar.reconstruct(tape, encoded);
    if (features.action) action = prar.recognize(tape, encoded).first;
  }

  // Reconstructed middle hip, still in the pose frame: T x 2.
  std::optional<Var> recon_location;
  if (features.location == Source::Reconstructed) {
    RowMatrix<double> select = RowMatrix<double>::Zero(frames, frames * joints);
    for (Index t = 0; t < frames; ++t) {
      select(t, t * joints + layout.hip_pair.first) += 0.5;
      select(t, t * joints + layout.hip_pair.second) += 0.5;
    }
    RowMatrix<double> xy = RowMatrix<double>::Zero(3, 2);
    xy(0, 0) = xy(1, 1) = 1.0;
    recon_location = matmul(matmul(tape.constant(std::move(select)), *recon), tape.constant(std::move(xy)));
  }

  const Trajectory raw_location = extract_location(observed, layout);
  PredictionInputs out;
  if (recon_location) {
    Trajectory px = recon_location->value() * pose_frame.scale;
    px.rowwise() += pose_frame.center.transpose();
    out.frame = fa.frame_for(px);
  } else {
    out.frame = fa.frame_for(raw_location);
  }
  const FaFrame& frame = out.frame;
  const Eigen::Vector2d shift = (pose_frame.center - frame.anchor) / frame.scale;
  const double ratio = pose_frame.scale / frame.scale;

  // In offset mode a reconstructed anchor moves with the parameters.
  if (recon_location && fa.config().output_mode == OutputMode::Offset) {
    RowMatrix<double> last = RowMatrix<double>::Zero(1, frames);
    last(0, frames - 1) = 1.0;
    const Var hip = matmul(tape.constant(std::move(last)), *recon_location);
    out.anchor_delta = ratio * (hip - tape.constant(hip.value()));
  }

  FaStreams& streams = out.streams;
  if (features.grid) streams.grid = tape.constant(fa.normalize_grid(grid));
  if (features.location == Source::Raw) streams.location = tape.constant(fa.normalize_location(raw_location, frame));
  if (recon_location) {
    streams.location = affine_columns(*recon_location, Eigen::VectorXd(Eigen::Vector2d(ratio, ratio)), Eigen::VectorXd(shift));
    if (out.anchor_delta) streams.location = add_row(*streams.location, -1.0 * *out.anchor_delta);
  }
  if (features.pose == Source::Raw) streams.pose = tape.constant(fa.normalize_pose(observed, frame));
  if (features.pose == Source::Reconstructed) {
    const double pose_ratio = pose_frame.scale / fa.config().pose_scale;
    const Eigen::Vector2d pose_shift = (pose_frame.center - frame.anchor) / fa.config().pose_scale;
    const Eigen::Vector3d scale(pose_ratio, pose_ratio, 1.0);
    const Eigen::Vector3d offset(pose_shift.x(), pose_shift.y(), 0.0);
    Var pose = affine_columns(*recon, Eigen::VectorXd(scale), Eigen::VectorXd(offset));
    if (out.anchor_delta) {
      const Var delta = concat_columns<double>({*out.anchor_delta, tape.constant(RowMatrix<double>::Zero(1, 1))});
      pose = add_row(pose, (-frame.scale / fa.config().pose_scale) * delta);
    }
    streams.pose = reshape(pose, frames, 3 * joints);
  }
  if (action) streams.action = *action;
  return out;
}

PredictionVars build_prediction(Tape& tape, const PrarModel& prar, const FaModel& fa, const FeatureSet& features,
                                const SkeletonSequence& observed, const GridFlow& grid, const PrarOutputs* cached) {
  const PredictionInputs in = build_streams(tape, prar, fa, features, observed, grid, cached);
  return {fa.predict(tape, fa.aggregate(tape, in.streams)), in.frame, in.anchor_delta};
}

Var frame_target(Tape& tape, const PredictionVars& prediction, const Trajectory& pixels) {
  const Var target = tape.constant(prediction.frame.from_pixels(pixels));
  return prediction.anchor_delta ? add_row(target, -1.0 * *prediction.anchor_delta) : target;
}

Trajectory predict_trajectory(const PrarModel& prar, const FaModel& fa, const FeatureSet& features,
                              const SkeletonSequence& observed, const GridFlow& grid) {
  Tape tape(std::vector<const ModelParams*>{&prar.params(), &fa.params()});
  const auto pv = build_prediction(tape, prar, fa, features, observed, grid);
  return pv.frame.to_pixels(pv.predicted.value());
}

}  // namespace gprar
