#include "salad/nn/optim.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "salad/simd/kernels.hpp"

namespace salad::nn {

namespace {
constexpr char kMagic[8] = {'S', 'A', 'L', 'A', 'D', 'C', 'K', '1'};
}

Adam::Adam(std::vector<Param*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (auto* p : params_) {
    m_.emplace_back(p->size(), 0.0f);
    v_.emplace_back(p->size(), 0.0f);
  }
}

void Adam::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

void Adam::step() {
  ++t_;
  simd::AdamStep st{};
  st.lr = cfg_.lr;
  st.beta1 = cfg_.beta1;
  st.beta2 = cfg_.beta2;
  st.eps = cfg_.eps;
  st.weight_decay = cfg_.weight_decay;
  st.bias1 = static_cast<float>(1.0 - std::pow(static_cast<double>(cfg_.beta1), static_cast<double>(t_)));
  st.bias2 = static_cast<float>(1.0 - std::pow(static_cast<double>(cfg_.beta2), static_cast<double>(t_)));
  const auto& k = simd::kernels();
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Param* p = params_[i];
    k.adam(st, p->value.data(), p->grad.data(), m_[i].data(), v_[i].data(), p->size());
  }
}

std::int64_t decay_step(std::int64_t iterations, double decay_fraction) {
  return static_cast<std::int64_t>(std::floor(decay_fraction * static_cast<double>(iterations)));
}

float step_decay_lr(float base_lr, std::int64_t iteration, std::int64_t iterations,
                    double decay_fraction, float factor) {
  return iteration >= decay_step(iterations, decay_fraction) ? base_lr * factor : base_lr;
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<Param*>& params,
                     const nlohmann::json& manifest) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  nlohmann::json header;
  header["manifest"] = manifest;
  auto& table = header["tensors"];
  table = nlohmann::json::array();
  for (const auto* p : params) table.push_back({{"name", p->name}, {"shape", p->shape}});
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic);
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto* p : params) {
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(p->value.size() * sizeof(float)));
  }
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

namespace {

nlohmann::json read_header(std::ifstream& in, const std::filesystem::path& path) {
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw IoError("not a checkpoint: " + path.string());
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || len > (1u << 26)) throw IoError("corrupt checkpoint header: " + path.string());
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw IoError("truncated checkpoint: " + path.string());
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt checkpoint header " + path.string() + ": " + e.what());
  }
}

}  // namespace

nlohmann::json load_checkpoint(const std::filesystem::path& path, const std::vector<Param*>& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const auto header = read_header(in, path);
  const auto& table = header.at("tensors");
  if (table.size() != params.size()) {
    throw IoError("checkpoint tensor count mismatch in " + path.string());
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (table[i].at("name").get<std::string>() != params[i]->name ||
        table[i].at("shape").get<std::vector<int>>() != params[i]->shape) {
      throw IoError("checkpoint tensor '" + table[i].at("name").get<std::string>() +
                    "' does not match model parameter '" + params[i]->name + "' in " + path.string());
    }
    in.read(reinterpret_cast<char*>(params[i]->value.data()),
            static_cast<std::streamsize>(params[i]->value.size() * sizeof(float)));
    if (!in) throw IoError("truncated checkpoint payload: " + path.string());
  }
  return header.at("manifest");
}

nlohmann::json read_checkpoint_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  return read_header(in, path).at("manifest");
}

double grad_norm_sq(const std::vector<Param*>& params) {
  double s = 0.0;
  for (const auto* p : params) {
    for (float g : p->grad) s += static_cast<double>(g) * g;
  }
  return s;
}

}  // namespace salad::nn
