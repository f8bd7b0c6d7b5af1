#pragma once

// The embedding network: affine layers with ReLU between them, an optional
// unit-norm output, exact reverse-mode gradients, and a binary checkpoint.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "reid/error.hpp"
#include "reid/io.hpp"
#include "reid/random.hpp"
#include "reid/tensor.hpp"

namespace reid {

struct EncoderConfig {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims;
  std::size_t output_dim = 32;
  bool normalize_output = true;
  std::uint64_t init_seed = 0;

  bool operator==(const EncoderConfig&) const = default;

  // fan_in of every affine layer, followed by the final fan_out.
  std::vector<std::size_t> layer_widths() const {
    std::vector<std::size_t> widths{input_dim};
    widths.insert(widths.end(), hidden_dims.begin(), hidden_dims.end());
    widths.push_back(output_dim);
    return widths;
  }
};

struct Layer {
  Matrix weight;  // fan_out x fan_in
  Vector bias;    // fan_out

  bool operator==(const Layer&) const = default;
};

struct EncoderParams {
  EncoderConfig config;
  std::vector<Layer> layers;

  bool operator==(const EncoderParams&) const = default;
};

// Same shape as EncoderParams::layers, plus the input gradient.
struct EncoderGradient {
  std::vector<Layer> layers;
  Vector input;
};

struct ForwardTrace {
  std::vector<Vector> inputs;          // input to layer l
  std::vector<Vector> pre_activation;  // W_l a + b_l
  Vector output;                       // before normalization
  double output_norm = 0.0;            // set when normalize_output
};

inline void validate(const EncoderConfig& config) {
  require(config.input_dim > 0 && config.output_dim > 0, ErrorKind::invalid_argument,
          "encoder dimensions must be positive");
  for (auto h : config.hidden_dims) {
    require(h > 0, ErrorKind::invalid_argument, "hidden dimensions must be positive");
  }
}

inline void check_shapes(const EncoderParams& params) {
  const auto widths = params.config.layer_widths();
  require(params.layers.size() + 1 == widths.size(), ErrorKind::format_shape,
          "encoder has " + std::to_string(params.layers.size()) + " layers, config implies " +
              std::to_string(widths.size() - 1));
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    require(layer.weight.rows() == widths[l + 1] && layer.weight.cols() == widths[l] &&
                layer.bias.size() == widths[l + 1],
            ErrorKind::format_shape, "layer " + std::to_string(l) + " shape disagrees with config");
  }
}

// He-normal weights (std sqrt(2 / fan_in)), zero biases.
inline EncoderParams init_params(const EncoderConfig& config) {
  validate(config);
  EncoderParams params{config, {}};
  Rng rng(config.init_seed);
  const auto widths = config.layer_widths();
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    Layer layer{Matrix(widths[l + 1], widths[l]), Vector(widths[l + 1], 0.0)};
    const double scale = std::sqrt(2.0 / static_cast<double>(widths[l]));
    for (auto& w : layer.weight.data()) w = scale * rng.normal();
    params.layers.push_back(std::move(layer));
  }
  return params;
}

// Single affine layer with W = I, b = 0: maps features to themselves.
inline EncoderParams identity_encoder(std::size_t dim, bool normalize_output = false) {
  EncoderParams params{{dim, {}, dim, normalize_output, 0}, {}};
  Layer layer{Matrix(dim, dim), Vector(dim, 0.0)};
  for (std::size_t i = 0; i < dim; ++i) layer.weight(i, i) = 1.0;
  params.layers.push_back(std::move(layer));
  return params;
}

inline Vector forward(const EncoderParams& params, std::span<const double> x, ForwardTrace* trace = nullptr) {
  require(x.size() == params.config.input_dim, ErrorKind::dimension_mismatch,
          "encoder input has length " + std::to_string(x.size()) + ", expected " +
              std::to_string(params.config.input_dim));
  if (trace) *trace = ForwardTrace{};
  Vector a(x.begin(), x.end());
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    Vector z(layer.bias);
    for (std::size_t r = 0; r < layer.weight.rows(); ++r) {
      const auto w = layer.weight.row(r);
      double acc = 0.0;
      for (std::size_t c = 0; c < w.size(); ++c) acc += w[c] * a[c];
      z[r] += acc;
    }
    if (trace) {
      trace->inputs.push_back(a);
      trace->pre_activation.push_back(z);
    }
    const bool last = l + 1 == params.layers.size();
    if (!last) {
      for (auto& v : z) v = v > 0.0 ? v : 0.0;
    }
    a = std::move(z);
  }
  if (trace) trace->output = a;
  if (params.config.normalize_output) {
    double sq = 0.0;
    for (double v : a) sq += v * v;
    const double norm = std::sqrt(sq);
    require(norm > 0.0, ErrorKind::non_finite, "cannot normalize a zero embedding");
    for (auto& v : a) v /= norm;
    if (trace) trace->output_norm = norm;
  }
  return a;
}

inline Vector forward(const EncoderParams& params, std::span<const double> x, ForwardTrace& trace) {
  return forward(params, x, &trace);
}

// Gradients of dot(embedding, grad_embedding) w.r.t. every parameter and the
// input. ReLU'(0) is taken as 0.
inline EncoderGradient backward(const EncoderParams& params, const ForwardTrace& trace,
                                std::span<const double> grad_embedding) {
  const std::size_t n_layers = params.layers.size();
  require(trace.inputs.size() == n_layers && trace.pre_activation.size() == n_layers, ErrorKind::format_shape,
          "trace does not belong to these parameters");
  for (std::size_t l = 0; l < n_layers; ++l) {
    require(trace.inputs[l].size() == params.layers[l].weight.cols() &&
                trace.pre_activation[l].size() == params.layers[l].weight.rows(),
            ErrorKind::format_shape, "trace shape disagrees with layer " + std::to_string(l));
  }
  require(grad_embedding.size() == params.config.output_dim, ErrorKind::dimension_mismatch,
          "embedding gradient has length " + std::to_string(grad_embedding.size()) + ", expected " +
              std::to_string(params.config.output_dim));

  Vector delta(grad_embedding.begin(), grad_embedding.end());
  if (params.config.normalize_output) {
    // d(v/|v|)^T g = (g - y (y.g)) / |v|
    const double norm = trace.output_norm;
    require(norm > 0.0, ErrorKind::format_shape, "trace lacks the normalization state");
    double dot = 0.0;
    for (std::size_t i = 0; i < delta.size(); ++i) dot += trace.output[i] / norm * delta[i];
    for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = (delta[i] - trace.output[i] / norm * dot) / norm;
  }

  EncoderGradient grad;
  grad.layers.resize(n_layers);
  for (std::size_t l = n_layers; l-- > 0;) {
    const auto& layer = params.layers[l];
    if (l + 1 < n_layers) {
      const auto& z = trace.pre_activation[l];
      for (std::size_t i = 0; i < delta.size(); ++i) {
        if (!(z[i] > 0.0)) delta[i] = 0.0;
      }
    }
    const auto& input = trace.inputs[l];
    auto& g = grad.layers[l];
    g.weight = Matrix(layer.weight.rows(), layer.weight.cols());
    g.bias = delta;
    Vector upstream(layer.weight.cols(), 0.0);
    for (std::size_t r = 0; r < layer.weight.rows(); ++r) {
      const double d = delta[r];
      auto grow = g.weight.row(r);
      const auto wrow = layer.weight.row(r);
      for (std::size_t c = 0; c < grow.size(); ++c) {
        grow[c] = d * input[c];
        upstream[c] += wrow[c] * d;
      }
    }
    delta = std::move(upstream);
  }
  grad.input = std::move(delta);
  return grad;
}

// ---------------------------------------------------------------------------
// Checkpoints
//
// Layout: "REIDENC1", u64 little-endian header length, JSON header, then the
// parameter payload as little-endian IEEE-754 doubles, layer by layer,
// weights (row-major) before biases. Header offsets are relative to the start
// of the payload.

inline constexpr std::string_view kCheckpointMagic = "REIDENC1";

namespace detail {

inline void append_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint64_t read_u64_le(std::string_view bytes, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[at + i])) << (8 * i);
  return v;
}

inline void append_doubles(std::string& out, const std::vector<double>& values) {
  for (double d : values) append_u64_le(out, std::bit_cast<std::uint64_t>(d));
}

}  // namespace detail

inline nlohmann::ordered_json encoder_config_json(const EncoderConfig& config) {
  nlohmann::ordered_json j;
  j["input_dim"] = config.input_dim;
  j["hidden_dims"] = config.hidden_dims;
  j["output_dim"] = config.output_dim;
  j["activation"] = "relu";
  j["normalize_output"] = config.normalize_output;
  j["init_seed"] = config.init_seed;
  return j;
}

inline std::string checkpoint_bytes(const EncoderParams& params) {
  check_shapes(params);
  nlohmann::ordered_json header;
  header["format"] = "reid-encoder";
  header["version"] = 1;
  header["config"] = encoder_config_json(params.config);
  nlohmann::ordered_json layers = nlohmann::ordered_json::array();
  std::uint64_t offset = 0;
  for (const auto& layer : params.layers) {
    nlohmann::ordered_json entry;
    entry["weight_shape"] = {layer.weight.rows(), layer.weight.cols()};
    entry["weight_offset"] = offset;
    offset += 8 * layer.weight.size();
    entry["bias_shape"] = {layer.bias.size()};
    entry["bias_offset"] = offset;
    offset += 8 * layer.bias.size();
    layers.push_back(std::move(entry));
  }
  header["layers"] = std::move(layers);
  header["payload_bytes"] = offset;
  const auto header_text = header.dump();

  std::string out(kCheckpointMagic);
  detail::append_u64_le(out, header_text.size());
  out += header_text;
  for (const auto& layer : params.layers) {
    detail::append_doubles(out, layer.weight.data());
    detail::append_doubles(out, layer.bias);
  }
  return out;
}

inline EncoderParams parse_checkpoint(std::string_view bytes, const std::string& source = "checkpoint") {
  require(bytes.size() >= kCheckpointMagic.size() + 8 && bytes.substr(0, kCheckpointMagic.size()) == kCheckpointMagic,
          ErrorKind::format_version, source + ": not a REIDENC1 checkpoint");
  const auto header_len = detail::read_u64_le(bytes, kCheckpointMagic.size());
  const std::size_t header_start = kCheckpointMagic.size() + 8;
  require(header_len <= bytes.size() - header_start, ErrorKind::format_shape, source + ": truncated header");
  const std::size_t payload_start = header_start + header_len;
  const auto payload = bytes.substr(payload_start);

  EncoderParams params;
  try {
    const auto header = nlohmann::json::parse(bytes.substr(header_start, header_len));
    require(header.at("version").get<int>() == 1, ErrorKind::format_version, source + ": unsupported version");
    const auto& c = header.at("config");
    params.config.input_dim = c.at("input_dim").get<std::size_t>();
    params.config.hidden_dims = c.at("hidden_dims").get<std::vector<std::size_t>>();
    params.config.output_dim = c.at("output_dim").get<std::size_t>();
    params.config.normalize_output = c.at("normalize_output").get<bool>();
    params.config.init_seed = c.at("init_seed").get<std::uint64_t>();
    validate(params.config);

    const auto widths = params.config.layer_widths();
    const auto& layers = header.at("layers");
    require(layers.size() + 1 == widths.size(), ErrorKind::format_shape,
            source + ": layer count disagrees with embedded config");
    require(header.at("payload_bytes").get<std::uint64_t>() == payload.size(), ErrorKind::format_shape,
            source + ": payload size disagrees with header");
    auto read_block = [&](std::uint64_t offset, std::size_t count) {
      require(offset <= payload.size() && count * 8 <= payload.size() - offset, ErrorKind::format_shape,
              source + ": parameter block out of range");
      std::vector<double> values(count);
      for (std::size_t i = 0; i < count; ++i) {
        values[i] = std::bit_cast<double>(detail::read_u64_le(payload, offset + 8 * i));
      }
      return values;
    };
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& entry = layers[l];
      const auto wshape = entry.at("weight_shape").get<std::vector<std::size_t>>();
      const auto bshape = entry.at("bias_shape").get<std::vector<std::size_t>>();
      require(wshape.size() == 2 && wshape[0] == widths[l + 1] && wshape[1] == widths[l] && bshape.size() == 1 &&
                  bshape[0] == widths[l + 1],
              ErrorKind::format_shape, source + ": layer " + std::to_string(l) + " shape disagrees with embedded config");
      Layer layer{Matrix(wshape[0], wshape[1]), {}};
      layer.weight.data() = read_block(entry.at("weight_offset").get<std::uint64_t>(), layer.weight.size());
      layer.bias = read_block(entry.at("bias_offset").get<std::uint64_t>(), bshape[0]);
      params.layers.push_back(std::move(layer));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format_shape, source + ": malformed header: " + e.what());
  }
  return params;
}

inline void save_checkpoint(const EncoderParams& params, const std::filesystem::path& path) {
  write_file_atomic(path, checkpoint_bytes(params));
}

inline EncoderParams load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(read_file(path), path.string());
}

// Copies of every parameter, flattened in checkpoint order.
inline std::vector<double> flatten(const std::vector<Layer>& layers) {
  std::vector<double> out;
  for (const auto& layer : layers) {
    out.insert(out.end(), layer.weight.data().begin(), layer.weight.data().end());
    out.insert(out.end(), layer.bias.begin(), layer.bias.end());
  }
  return out;
}

}  // namespace reid
