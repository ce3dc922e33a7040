#include "gprar/aggregator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gprar {

namespace {
const char* kStreams[] = {"grid", "pose", "location", "action"};

bool has_stream(const StreamSet& s, const std::string& name) {
  if (name == "grid") return s.grid;
  if (name == "pose") return s.pose;
  if (name == "location") return s.location;
  return s.action;
}

constexpr double kMinStreamStd = 1e-6;

ConvGeometry same_conv(Index kernel) { return {1, kernel, 1, (kernel - 1) / 2}; }

std::string to_string(OutputMode m) { return m == OutputMode::Offset ? "offset" : "absolute"; }

OutputMode parse_output_mode(const std::string& s) {
  if (s == "offset") return OutputMode::Offset;
  if (s == "absolute") return OutputMode::Absolute;
  throw std::invalid_argument("unknown output mode '" + s + "'");
}
}  // namespace

ColumnStats ColumnStats::fit(const std::vector<RowMatrix<double>>& blocks, double std_floor) {
  if (!(std_floor >= 0.0)) throw std::invalid_argument("column stats: negative deviation floor");
  if (blocks.empty()) throw std::invalid_argument("column stats: no data");
  const Index cols = blocks.front().cols();
  Eigen::ArrayXd sum = Eigen::ArrayXd::Zero(cols), sq = sum;
  double n = 0.0;
  for (const auto& b : blocks) {
    if (b.cols() != cols) throw std::invalid_argument("column stats: inconsistent widths");
    sum += b.colwise().sum().transpose().array();
    sq += b.array().square().colwise().sum().transpose();
    n += static_cast<double>(b.rows());
  }
  ColumnStats out;
  for (Index c = 0; c < cols; ++c) {
    const double mean = sum(c) / n;
    const double sd = std::max(std::sqrt(std::max(sq(c) / n - mean * mean, 0.0)), std_floor);
    out.mean.push_back(mean);
    out.std.push_back(sd > kMinStreamStd ? sd : 1.0);
  }
  return out;
}

void FaConfig::validate() const {
  if (frames < 2 || horizon < 1) throw std::invalid_argument("fa config: need frames >= 2 and horizon >= 1");
  if (joints < 1 || action_channels < 1 || stream_channels < 1)
    throw std::invalid_argument("fa config: channel counts must be positive");
  if (stream_kernel % 2 == 0 || encoder_kernel % 2 == 0)
    throw std::invalid_argument("fa config: encoder kernels must be odd");
  if (encoder_channels.size() != 2) throw std::invalid_argument("fa config: joint encoder has exactly 2 layers");
  if (decoder_kernel < 2 || decoder_channels < 1) throw std::invalid_argument("fa config: bad decoder geometry");
  if (!(position_scale > 0.0) || !(pose_scale > 0.0) || !(flow_scale > 0.0))
    throw std::invalid_argument("fa config: scales must be positive");
  if (!(stream_std_floor >= 0.0)) throw std::invalid_argument("fa config: stream deviation floor must be non-negative");
  if (!(streams.grid || streams.pose || streams.location || streams.action))
    throw std::invalid_argument("fa config: at least one input stream required");
  for (const auto& [name, st] : stream_stats) {
    if (name != "grid" && name != "pose" && name != "location" && name != "action")
      throw std::invalid_argument("fa config: statistics for unknown stream '" + name + "'");
    if (st.mean.size() != st.std.size()) throw std::invalid_argument("fa config: stream '" + name + "' statistics mismatch");
    for (double v : st.std)
      if (!(v > 0.0)) throw std::invalid_argument("fa config: stream '" + name + "' has a non-positive deviation");
  }
}

nlohmann::json FaConfig::to_json() const {
  nlohmann::json j = {{"frames", frames},
          {"horizon", horizon},
          {"joints", joints},
          {"action_channels", action_channels},
          {"stream_channels", stream_channels},
          {"stream_kernel", stream_kernel},
          {"encoder_channels", encoder_channels},
          {"encoder_kernel", encoder_kernel},
          {"decoder_channels", decoder_channels},
          {"decoder_kernel", decoder_kernel},
          {"position_scale", position_scale},
          {"pose_scale", pose_scale},
          {"flow_scale", flow_scale},
          {"stream_std_floor", stream_std_floor},
          {"output_mode", to_string(output_mode)},
          {"streams", {{"grid", streams.grid}, {"pose", streams.pose}, {"location", streams.location},
                       {"action", streams.action}}}};
  auto& stats = j["stream_stats"] = nlohmann::json::object();
  for (const auto& [name, st] : stream_stats) stats[name] = {{"mean", st.mean}, {"std", st.std}};
  return j;
}

FaConfig FaConfig::from_json(const nlohmann::json& j) {
  FaConfig c;
  c.frames = j.value("frames", c.frames);
  c.horizon = j.value("horizon", c.horizon);
  c.joints = j.value("joints", c.joints);
  c.action_channels = j.value("action_channels", c.action_channels);
  c.stream_channels = j.value("stream_channels", c.stream_channels);
  c.stream_kernel = j.value("stream_kernel", c.stream_kernel);
  c.encoder_channels = j.value("encoder_channels", c.encoder_channels);
  c.encoder_kernel = j.value("encoder_kernel", c.encoder_kernel);
  c.decoder_channels = j.value("decoder_channels", c.decoder_channels);
  c.decoder_kernel = j.value("decoder_kernel", c.decoder_kernel);
  c.position_scale = j.value("position_scale", c.position_scale);
  c.pose_scale = j.value("pose_scale", c.pose_scale);
  c.flow_scale = j.value("flow_scale", c.flow_scale);
  c.stream_std_floor = j.value("stream_std_floor", c.stream_std_floor);
  c.output_mode = parse_output_mode(j.value("output_mode", to_string(c.output_mode)));
  if (j.contains("streams")) {
    const auto& s = j.at("streams");
    c.streams = {s.value("grid", true), s.value("pose", true), s.value("location", true), s.value("action", true)};
  }
  if (j.contains("stream_stats"))
    for (const auto& [name, st] : j.at("stream_stats").items())
      c.stream_stats[name] = {st.at("mean").get<std::vector<double>>(), st.at("std").get<std::vector<double>>()};
  c.validate();
  return c;
}

Trajectory FaFrame::to_pixels(const RowMatrix<double>& normalized) const {
  Trajectory out = normalized * scale;
  out.rowwise() += anchor.transpose();
  return out;
}

RowMatrix<double> FaFrame::from_pixels(const Trajectory& pixels) const {
  RowMatrix<double> out = pixels;
  out.rowwise() -= anchor.transpose();
  return out / scale;
}

FaModel::FaModel(FaConfig config, std::uint64_t seed) : config_(std::move(config)), params_(seed) {
  config_.validate();
  add_params();
}

FaModel::FaModel(FaConfig config, ModelParams params) : FaModel(std::move(config), params.rng_seed()) {
  for (const auto& [name, entry] : params_.entries()) {
    if (!params.contains(name)) throw std::invalid_argument("fa: checkpoint lacks entry '" + name + "'");
    if (params.value(name).shape() != entry.value.shape())
      throw std::invalid_argument("fa: checkpoint entry '" + name + "' has shape " +
                                  shape_string(params.value(name).shape()));
  }
  params_ = std::move(params);
}

Index FaModel::stream_width(const std::string& stream) const {
  if (stream == "grid") return 2 * kGridCells;
  if (stream == "pose") return 3 * config_.joints;
  if (stream == "location") return 2;
  if (stream == "action") return config_.action_channels;
  throw std::invalid_argument("fa: unknown stream '" + stream + "'");
}

Index FaModel::encoded_frames() const {
  const ConvGeometry strided{1, config_.encoder_kernel, 2, (config_.encoder_kernel - 1) / 2};
  return conv_output_length(config_.frames, strided);
}

void FaModel::add_params() {
  const Index sc = config_.stream_channels;
  const Index sk = config_.stream_kernel;
  for (const char* s : kStreams) {
    if (!has_stream(config_.streams, s)) continue;
    const Index w = stream_width(s);
    params_.add_glorot(std::string("fa.stream.") + s + ".weight", Shape{sk * w, sc}, sk * w, sk * sc);
    params_.add_zeros(std::string("fa.stream.") + s + ".bias", Shape{1, sc});
  }
  const Index junction = 4 * sc;
  const Index ek = config_.encoder_kernel;
  const Index e0 = config_.encoder_channels[0];
  const Index e1 = config_.encoder_channels[1];
  params_.add_glorot("fa.enc.0.weight", Shape{ek * junction, e0}, ek * junction, ek * e0);
  params_.add_zeros("fa.enc.0.bias", Shape{1, e0});
  params_.add_glorot("fa.enc.1.weight", Shape{ek * e0, e1}, ek * e0, ek * e1);
  params_.add_zeros("fa.enc.1.bias", Shape{1, e1});
  const Index dk = config_.decoder_kernel;
  const Index dc = config_.decoder_channels;
  params_.add_glorot("fa.dec.0.weight", Shape{dk * e1, dc}, dk * e1, dk * dc);
  params_.add_zeros("fa.dec.0.bias", Shape{1, dc});
  params_.add_glorot("fa.dec.1.weight", Shape{3 * dc, 2}, 3 * dc, 3 * 2);
  params_.add_zeros("fa.dec.1.bias", Shape{1, 2});
}

FaFrame FaModel::frame_for(const Trajectory& location) const {
  FaFrame f;
  f.scale = config_.position_scale;
  if (config_.output_mode == OutputMode::Offset && location.rows() > 0) f.anchor = location.row(location.rows() - 1).transpose();
  return f;
}

RowMatrix<double> FaModel::normalize_grid(const GridFlow& grid) const { return grid.cells / config_.flow_scale; }

RowMatrix<double> FaModel::normalize_pose(const SkeletonSequence& pose, const FaFrame& frame) const {
  RowMatrix<double> out = RowMatrix<double>::Zero(pose.frames(), 3 * pose.joints());
  for (Index t = 0; t < pose.frames(); ++t)
    for (Index k = 0; k < pose.joints(); ++k) {
      if (!pose.observed(t, k)) continue;
      out(t, 3 * k) = (pose.x(t, k) - frame.anchor.x()) / config_.pose_scale;
      out(t, 3 * k + 1) = (pose.y(t, k) - frame.anchor.y()) / config_.pose_scale;
      out(t, 3 * k + 2) = pose.confidence(t, k);
    }
  return out;
}

RowMatrix<double> FaModel::normalize_location(const Trajectory& location, const FaFrame& frame) const {
  return frame.from_pixels(location);
}

void FaModel::set_stream_statistics(std::map<std::string, ColumnStats> stats) {
  FaConfig next = config_;
  next.stream_stats = std::move(stats);
  next.validate();
  for (const auto& [name, st] : next.stream_stats)
    if (static_cast<Index>(st.mean.size()) != stream_width(name))
      throw std::invalid_argument("fa: stream '" + name + "' statistics have " + std::to_string(st.mean.size()) +
                                  " columns, stream has " + std::to_string(stream_width(name)));
  config_ = std::move(next);
}

Var FaModel::standardize(Var x, const std::string& stream) const {
  auto it = config_.stream_stats.find(stream);
  if (it == config_.stream_stats.end()) return x;
  const auto& st = it->second;
  if (static_cast<Index>(st.mean.size()) != x.cols())
    x.tape->shape_error("fa stream '" + stream + "'", "statistics cover " + std::to_string(st.mean.size()) + " columns");
  const Eigen::Map<const Eigen::VectorXd> mean(st.mean.data(), static_cast<Index>(st.mean.size()));
  const Eigen::Map<const Eigen::VectorXd> sd(st.std.data(), static_cast<Index>(st.std.size()));
  const Eigen::VectorXd scale = sd.cwiseInverse();
  const Eigen::VectorXd offset = -mean.cwiseProduct(scale);
  return affine_columns(x, scale, offset);
}

Var FaModel::aggregate(Tape& tape, const FaStreams& streams) const {
  Tape::Scope scope(tape, "fa.aggregate");
  const std::optional<Var>* inputs[] = {&streams.grid, &streams.pose, &streams.location, &streams.action};
  const Index sc = config_.stream_channels;
  std::vector<Var> embedded;
  for (int i = 0; i < 4; ++i) {
    const std::string s = kStreams[i];
    if (!has_stream(config_.streams, s)) {
      embedded.push_back(tape.constant(RowMatrix<double>::Zero(config_.frames, sc)));
      continue;
    }
    if (!inputs[i]->has_value()) throw std::invalid_argument("fa: stream '" + s + "' is configured but not supplied");
    const Var x = **inputs[i];
    if (x.rows() != config_.frames || x.cols() != stream_width(s))
      tape.shape_error("fa stream '" + s + "'", std::to_string(x.rows()) + "x" + std::to_string(x.cols()) +
                                                    ", expected " + std::to_string(config_.frames) + "x" +
                                                    std::to_string(stream_width(s)));
    Var e = temporal_conv(standardize(x, s), tape.param("fa.stream." + s + ".weight"), same_conv(config_.stream_kernel));
    embedded.push_back(relu(add_row(e, tape.param("fa.stream." + s + ".bias"))));
  }
  Var h = concat_columns(embedded);
  h = relu(add_row(temporal_conv(h, tape.param("fa.enc.0.weight"), same_conv(config_.encoder_kernel)),
                   tape.param("fa.enc.0.bias")));
  const ConvGeometry strided{1, config_.encoder_kernel, 2, (config_.encoder_kernel - 1) / 2};
  h = relu(add_row(temporal_conv(h, tape.param("fa.enc.1.weight"), strided), tape.param("fa.enc.1.bias")));
  return h;
}

Var FaModel::predict(Tape& tape, Var encoded) const {
  Tape::Scope scope(tape, "fa.predict");
  if (encoded.rows() != encoded_frames() || encoded.cols() != encoded_channels())
    tape.shape_error("fa.predict", "encoded " + std::to_string(encoded.rows()) + "x" + std::to_string(encoded.cols()));
  const Index dk = config_.decoder_kernel;
  const ConvGeometry up{1, dk, 2, (dk - 2 + 1) / 2};
  Var h = temporal_deconv(encoded, tape.param("fa.dec.0.weight"), up, config_.horizon);
  h = relu(add_row(h, tape.param("fa.dec.0.bias")));
  const ConvGeometry same{1, 3, 1, 1};
  Var out = add_row(temporal_deconv(h, tape.param("fa.dec.1.weight"), same, config_.horizon),
                    tape.param("fa.dec.1.bias"));
  if (config_.output_mode == OutputMode::Offset) {
    RowMatrix<double> cumulative = RowMatrix<double>::Zero(config_.horizon, config_.horizon);
    for (Index i = 0; i < config_.horizon; ++i) cumulative.row(i).head(i + 1).setOnes();
    out = matmul(tape.constant(std::move(cumulative)), out);
  }
  return out;
}

FaEncoding aggregate(const FaModel& model, const GridFlow& grid, const SkeletonSequence& pose,
                     const Trajectory& location, const Tensor& action) {
  const Index frames = model.config().frames;
  if (grid.frames() != frames || pose.frames() != frames || location.rows() != frames || action.rows() != frames)
    throw std::invalid_argument("aggregate: all streams must span " + std::to_string(frames) + " frames");
  FaEncoding enc;
  enc.frame = model.frame_for(location);
  Tape tape(&model.params());
  FaStreams s;
  const StreamSet& on = model.config().streams;
  if (on.grid) s.grid = tape.constant(model.normalize_grid(grid));
  if (on.pose) s.pose = tape.constant(model.normalize_pose(pose, enc.frame));
  if (on.location) s.location = tape.constant(model.normalize_location(location, enc.frame));
  if (on.action) s.action = tape.constant(action);
  enc.features = Tensor::from_matrix(model.aggregate(tape, s).value());
  return enc;
}

Trajectory predict(const FaModel& model, const FaEncoding& encoded) {
  Tape tape(&model.params());
  Var out = model.predict(tape, tape.constant(encoded.features));
  return encoded.frame.to_pixels(out.value());
}

double loss_prediction(const Trajectory& predicted, const Trajectory& truth) {
  if (predicted.rows() != truth.rows())
    throw std::invalid_argument("loss_prediction: trajectory lengths " + std::to_string(predicted.rows()) + " and " +
                                std::to_string(truth.rows()) + " differ");
  return (predicted - truth).squaredNorm();
}

double loss_prediction(const std::vector<Trajectory>& predicted, const std::vector<Trajectory>& truth) {
  if (predicted.size() != truth.size() || predicted.empty())
    throw std::invalid_argument("loss_prediction: batch size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) total += loss_prediction(predicted[i], truth[i]);
  return total / static_cast<double>(truth.size());
}

}  // namespace gprar
