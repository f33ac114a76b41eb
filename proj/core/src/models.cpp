#include "whisperline/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "whisperline/error.hpp"
#include "whisperline/rng.hpp"

namespace whisperline {

namespace {

LayerSpec conv(int kernel, int in_ch, int out_ch) {
  LayerSpec s;
  s.type = LayerType::Conv1D;
  s.kernel = kernel;
  s.in_ch = in_ch;
  s.out_ch = out_ch;
  s.relu = true;
  return s;
}

LayerSpec pool() {
  LayerSpec s;
  s.type = LayerType::MaxPool1D;
  s.size = 2;
  return s;
}

LayerSpec dense(int in, int out) {
  LayerSpec s;
  s.type = LayerType::Dense;
  s.in = in;
  s.out = out;
  return s;
}

LayerSpec relu() {
  LayerSpec s;
  s.type = LayerType::ReLU;
  return s;
}

LayerSpec dropout(float rate) {
  LayerSpec s;
  s.type = LayerType::Dropout;
  s.rate = rate;
  return s;
}

LayerSpec softmax() {
  LayerSpec s;
  s.type = LayerType::Softmax;
  return s;
}

LayerSpec lstm(int in, int hidden) {
  LayerSpec s;
  s.type = LayerType::Lstm;
  s.in = in;
  s.hidden = hidden;
  return s;
}

struct ConvPlan {
  std::vector<std::pair<int, int>> convs;  // (kernel, filters)
  std::vector<int> dense_widths;
};

ConvPlan arch_plan(const std::string& name) {
  if (name == "arch1") return {{{10, 32}, {5, 64}}, {1024}};
  if (name == "arch2") return {{{20, 32}, {10, 64}}, {1024}};
  if (name == "arch3") return {{{10, 32}, {10, 32}, {5, 64}, {5, 64}}, {1024}};
  if (name == "arch4") return {{{20, 32}, {20, 32}, {10, 64}, {10, 64}}, {1024}};
  if (name == "arch5") return {{{10, 32}, {10, 32}, {5, 64}, {5, 64}}, {1024, 512}};
  if (name == "arch6") return {{{20, 32}, {20, 32}, {10, 64}, {10, 64}}, {1024, 512}};
  throw ConfigError("unknown architecture: '" + name + "'");
}

}  // namespace

ModelSpec build_spec(const std::string& name, int input_dim, float dropout_rate) {
  if (input_dim != 64 && input_dim != 128 && input_dim != 256)
    throw ConfigError("input_dim must be one of 64, 128, 256");

  ModelSpec spec;
  spec.name = name;
  spec.input_dim = input_dim;

  if (name == "lstm64x2") {
    spec.layers.push_back(lstm(input_dim, 64));
    spec.layers.push_back(lstm(64, 64));
    spec.layers.push_back(dense(64, 2));
    spec.layers.push_back(softmax());
    return spec;
  }

  const ConvPlan plan = arch_plan(name);
  int len = input_dim;
  int ch = 1;
  // one max-pooling layer per filter-count group
  for (std::size_t i = 0; i < plan.convs.size(); ++i) {
    const auto [kernel, filters] = plan.convs[i];
    spec.layers.push_back(conv(kernel, ch, filters));
    ch = filters;
    const bool group_ends = i + 1 == plan.convs.size() || plan.convs[i + 1].second != filters;
    if (group_ends) {
      spec.layers.push_back(pool());
      len /= 2;
    }
  }

  int width = len * ch;  // channel-major flatten of the final feature map
  for (int d : plan.dense_widths) {
    spec.layers.push_back(dense(width, d));
    spec.layers.push_back(relu());
    width = d;
  }
  spec.layers.push_back(dropout(dropout_rate));
  spec.layers.push_back(dense(width, 2));
  spec.layers.push_back(softmax());
  return spec;
}

Network build(const std::string& name, int input_dim, std::uint64_t seed, float dropout_rate) {
  Network net;
  net.spec = build_spec(name, input_dim, dropout_rate);

  Rng rng(mix64(seed, hash_str("init")));
  auto he_uniform = [&](std::vector<float>& w, int fan_in, double scale) {
    const double limit = std::sqrt(6.0 / fan_in) * scale;
    for (auto& v : w) v = static_cast<float>(rng.uniform(-limit, limit));
  };

  // mark the decision head so its init can be shrunk
  std::size_t head_idx = net.spec.layers.size();
  for (std::size_t i = net.spec.layers.size(); i-- > 0;) {
    if (net.spec.layers[i].type == LayerType::Dense) {
      head_idx = i;
      break;
    }
  }

  for (std::size_t i = 0; i < net.spec.layers.size(); ++i) {
    const LayerSpec& s = net.spec.layers[i];
    Layer layer;
    layer.spec = s;
    switch (s.type) {
      case LayerType::Conv1D:
        layer.w.resize(static_cast<std::size_t>(s.kernel) * s.in_ch * s.out_ch);
        layer.b.assign(s.out_ch, 0.0f);
        he_uniform(layer.w, s.kernel * s.in_ch, 1.0);
        break;
      case LayerType::Dense:
        layer.w.resize(static_cast<std::size_t>(s.in) * s.out);
        layer.b.assign(s.out, 0.0f);
        // The head starts near zero so training begins from uniform
        // posteriors (initial loss = ln 2 on balanced data).
        he_uniform(layer.w, s.in, i == head_idx ? 0.01 : 1.0);
        break;
      case LayerType::Lstm: {
        const int g4 = 4 * s.hidden;
        layer.w.resize(static_cast<std::size_t>(g4) * s.in);
        layer.w2.resize(static_cast<std::size_t>(g4) * s.hidden);
        layer.b.assign(g4, 0.0f);
        const double lim_ih = std::sqrt(1.0 / s.in);
        const double lim_hh = std::sqrt(1.0 / s.hidden);
        for (auto& v : layer.w) v = static_cast<float>(rng.uniform(-lim_ih, lim_ih));
        for (auto& v : layer.w2) v = static_cast<float>(rng.uniform(-lim_hh, lim_hh));
        for (int j = 0; j < s.hidden; ++j) layer.b[s.hidden + j] = 1.0f;  // forget gate
        break;
      }
      default:
        break;
    }
    net.layers.push_back(std::move(layer));
  }
  return net;
}

long long count_params(const ModelSpec& spec) {
  long long n = 0;
  for (const auto& s : spec.layers) {
    switch (s.type) {
      case LayerType::Conv1D:
        n += static_cast<long long>(s.kernel) * s.in_ch * s.out_ch + s.out_ch;
        break;
      case LayerType::Dense:
        n += static_cast<long long>(s.in) * s.out + s.out;
        break;
      case LayerType::Lstm:
        n += 4LL * s.hidden * s.in + 4LL * s.hidden * s.hidden + 4LL * s.hidden;
        break;
      default:
        break;
    }
  }
  return n;
}

long long count_flops_per_frame(const ModelSpec& spec) {
  long long flops = 0;
  int len = spec.input_dim;
  for (const auto& s : spec.layers) {
    switch (s.type) {
      case LayerType::Conv1D:
        flops += 2LL * len * s.kernel * s.in_ch * s.out_ch;
        break;
      case LayerType::MaxPool1D:
        len /= s.size;
        break;
      case LayerType::Dense:
        flops += 2LL * s.in * s.out;
        break;
      case LayerType::Lstm:
        flops += 2LL * 4 * s.hidden * (s.in + s.hidden);
        break;
      default:
        break;
    }
  }
  return flops;
}

long long head_flops_per_frame(const ModelSpec& spec) {
  for (std::size_t i = spec.layers.size(); i-- > 0;)
    if (spec.layers[i].type == LayerType::Dense)
      return 2LL * spec.layers[i].in * spec.layers[i].out;
  return 0;
}

std::string describe(const ModelSpec& spec) {
  std::ostringstream os;
  os << spec.name << " (input dim " << spec.input_dim << ")\n";
  int len = spec.input_dim;
  int ch = 1;
  bool spatial = spec.layers.empty() || spec.layers.front().type != LayerType::Lstm;
  for (const auto& s : spec.layers) {
    long long params = 0;
    long long flops = 0;
    std::string shape;
    switch (s.type) {
      case LayerType::Conv1D:
        params = static_cast<long long>(s.kernel) * s.in_ch * s.out_ch + s.out_ch;
        flops = 2LL * len * s.kernel * s.in_ch * s.out_ch;
        ch = s.out_ch;
        shape = std::to_string(len) + "x" + std::to_string(ch);
        break;
      case LayerType::MaxPool1D:
        len /= s.size;
        shape = std::to_string(len) + "x" + std::to_string(ch);
        break;
      case LayerType::Dense:
        if (spatial) {
          shape = std::to_string(s.out) + " (flattened " + std::to_string(len) + "x" +
                  std::to_string(ch) + " channel-major)";
          spatial = false;
        } else {
          shape = std::to_string(s.out);
        }
        params = static_cast<long long>(s.in) * s.out + s.out;
        flops = 2LL * s.in * s.out;
        len = s.out;
        ch = 0;
        break;
      case LayerType::Lstm:
        params = 4LL * s.hidden * s.in + 4LL * s.hidden * s.hidden + 4LL * s.hidden;
        flops = 2LL * 4 * s.hidden * (s.in + s.hidden);
        len = s.hidden;
        spatial = false;
        shape = std::to_string(s.hidden);
        break;
      default:
        shape = std::to_string(len);
        break;
    }
    os << "  " << s.describe();
    if (!shape.empty()) os << "  -> " << shape;
    if (params > 0) os << "  [params " << params << ", flops/frame " << flops << "]";
    os << '\n';
  }
  os << "total params: " << count_params(spec) << '\n';
  os << "flops/frame (2 x multiply-adds, conv/dense/lstm only): " << count_flops_per_frame(spec)
     << '\n';
  os << "decision head flops/frame: " << head_flops_per_frame(spec) << '\n';
  return os.str();
}

namespace {

nlohmann::json layer_to_json(const LayerSpec& s) {
  nlohmann::json j;
  switch (s.type) {
    case LayerType::Conv1D:
      j["type"] = "conv1d";
      j["kernel"] = s.kernel;
      j["in_ch"] = s.in_ch;
      j["out_ch"] = s.out_ch;
      j["relu"] = s.relu;
      break;
    case LayerType::MaxPool1D:
      j["type"] = "maxpool1d";
      j["size"] = s.size;
      break;
    case LayerType::Dense:
      j["type"] = "dense";
      j["in"] = s.in;
      j["out"] = s.out;
      break;
    case LayerType::ReLU:
      j["type"] = "relu";
      break;
    case LayerType::Dropout:
      j["type"] = "dropout";
      j["rate"] = s.rate;
      break;
    case LayerType::Softmax:
      j["type"] = "softmax";
      break;
    case LayerType::Lstm:
      j["type"] = "lstm";
      j["in"] = s.in;
      j["hidden"] = s.hidden;
      break;
  }
  return j;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  nlohmann::json header;
  header["arch"] = ckpt.net.spec.name;
  header["input_dim"] = ckpt.net.spec.input_dim;
  nlohmann::json layers = nlohmann::json::array();
  float dropout_rate = 0.5f;
  for (const auto& l : ckpt.net.spec.layers) {
    layers.push_back(layer_to_json(l));
    if (l.type == LayerType::Dropout) dropout_rate = l.rate;
  }
  header["layers"] = layers;
  header["dropout"] = dropout_rate;
  header["norm_stats"] = nlohmann::json::parse(norm_stats_to_json(ckpt.norm_stats));
  header["metadata"] = ckpt.metadata;

  nlohmann::json counts = nlohmann::json::array();
  for (const auto& [p, c] : ckpt.net.param_blocks()) counts.push_back(c);
  header["param_counts"] = counts;

  const std::string header_str = header.dump();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os.write("QSE1", 4);
  const std::uint32_t version = 1;
  os.write(reinterpret_cast<const char*>(&version), 4);
  const std::uint64_t header_len = header_str.size();
  os.write(reinterpret_cast<const char*>(&header_len), 8);
  os.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const auto& [p, c] : ckpt.net.param_blocks())
    os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(c * sizeof(float)));
  if (!os) throw IoError("short write: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());

  char magic[4];
  std::uint32_t version = 0;
  std::uint64_t header_len = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&header_len), 8);
  if (!in || std::memcmp(magic, "QSE1", 4) != 0)
    throw FormatError("bad checkpoint magic: " + path.string());
  if (version != 1) throw FormatError("unsupported checkpoint version: " + path.string());

  std::string header_str(header_len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw FormatError("truncated checkpoint header: " + path.string());

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_str);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("bad checkpoint header json: " + std::string(e.what()));
  }

  Checkpoint ckpt;
  const std::string arch = header.at("arch").get<std::string>();
  const int input_dim = header.at("input_dim").get<int>();
  const float dropout_rate = header.value("dropout", 0.5f);
  ckpt.net = build(arch, input_dim, 0, dropout_rate);
  ckpt.norm_stats = norm_stats_from_json(header.at("norm_stats").dump());
  ckpt.metadata = header.value("metadata", nlohmann::json::object());

  // declared block sizes must match what the named architecture implies
  auto blocks = ckpt.net.param_blocks();
  const auto counts = header.at("param_counts");
  if (counts.size() != blocks.size())
    throw FormatError("checkpoint parameter block count mismatch: " + path.string());
  std::uint64_t expected_bytes = 0;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (counts[i].get<std::uint64_t>() != blocks[i].second)
      throw FormatError("checkpoint parameter block size mismatch: " + path.string());
    expected_bytes += blocks[i].second * sizeof(float);
  }

  const auto pos = in.tellg();
  in.seekg(0, std::ios::end);
  const std::uint64_t remaining = static_cast<std::uint64_t>(in.tellg() - pos);
  if (remaining != expected_bytes)
    throw FormatError("checkpoint parameter payload size mismatch: " + path.string());
  in.seekg(pos);

  for (auto& [p, c] : blocks) {
    in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(c * sizeof(float)));
    if (!in) throw FormatError("truncated checkpoint payload: " + path.string());
  }
  return ckpt;
}

}  // namespace whisperline
