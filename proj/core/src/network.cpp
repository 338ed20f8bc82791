#include "descatter3d/network.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "descatter3d/errors.hpp"
#include "descatter3d/rng.hpp"

namespace descatter3d {

using nlohmann::json;

void NetworkConfig::validate() const {
  if (n_stages < 1) throw ShapeError("NetworkConfig: n_stages must be >= 1");
  if (base_channels < 1) throw ShapeError("NetworkConfig: base_channels must be >= 1");
  if (convs_per_stage < 2 || convs_per_stage > 3) {
    throw ShapeError("NetworkConfig: convs_per_stage must be 2 or 3");
  }
  const int div = 1 << n_stages;
  for (int a = 0; a < 3; ++a) {
    if (input_dims[a] < div || input_dims[a] % div != 0) {
      throw ShapeError("NetworkConfig: input dims must be divisible by 2^n_stages");
    }
  }
}

int NetworkConfig::stage_channels(int stage) const {
  return base_channels << (stage - 1);
}

Tensor5 ConvBlock::forward(const Tensor5& x, bool train, bool cache) {
  Tensor5 t = conv.forward(x, cache);
  t = bn.forward(t, train, cache);
  return relu.forward(t, cache);
}

Tensor5 ConvBlock::backward(const Tensor5& grad_out) {
  Tensor5 g = relu.backward(grad_out);
  g = bn.backward(g);
  return conv.backward(g);
}

void ConvBlock::release_cache() {
  conv.release_cache();
  bn.release_cache();
  relu.release_cache();
}

Network::Network(const NetworkConfig& config) : config_(config) {
  config_.validate();
  const int n = config_.n_stages;
  const int convs = config_.convs_per_stage;

  CounterRng rng = CounterRng::stream(config_.init_seed, 0x6e657477ull);  // weight stream

  int in_ch = 1;
  for (int s = 1; s <= n; ++s) {
    EncoderStage stage;
    const int out_ch = config_.stage_channels(s);
    stage.blocks.emplace_back(in_ch, out_ch, 3);
    for (int b = 1; b < convs; ++b) stage.blocks.emplace_back(out_ch, out_ch, 3);
    encoder_.push_back(std::move(stage));
    in_ch = out_ch;
  }

  const int mid_ch = config_.base_channels << n;
  middle_.emplace_back(in_ch, mid_ch, 3);
  for (int b = 1; b < convs; ++b) middle_.emplace_back(mid_ch, mid_ch, 3);

  int above_ch = mid_ch;
  for (int s = n; s >= 1; --s) {
    const int out_ch = config_.stage_channels(s);
    DecoderStage stage(above_ch, out_ch);
    stage.skip_channels = out_ch;
    stage.blocks.emplace_back(2 * out_ch, out_ch, 3);
    for (int b = 1; b < convs; ++b) stage.blocks.emplace_back(out_ch, out_ch, 3);
    decoder_.push_back(std::move(stage));
    above_ch = out_ch;
  }

  final_conv_ = std::make_unique<Conv3d>(config_.base_channels, 1, 1);

  for (auto& st : encoder_) {
    for (auto& blk : st.blocks) blk.conv.init_he(rng);
  }
  for (auto& blk : middle_) blk.conv.init_he(rng);
  for (auto& st : decoder_) {
    st.up.init_he(rng);
    for (auto& blk : st.blocks) blk.conv.init_he(rng);
  }
  final_conv_->init_zero();  // residual identity at initialization
}

Network build_network(const NetworkConfig& config) { return Network(config); }

void Network::check_input(const Tensor5& x) const {
  if (x.channels() != 1) throw ShapeError("Network: input must have 1 channel");
  if (x.nx() != config_.input_dims[0] || x.ny() != config_.input_dims[1] ||
      x.nz() != config_.input_dims[2]) {
    throw ShapeError("Network: input spatial dims do not match config");
  }
}

Tensor5 Network::forward(const Tensor5& x) {
  check_input(x);
  const bool cache = train_mode_;
  // Eval-mode forward keeps skip activations on the stack so concurrent
  // calls on a shared frozen network do not race; train mode parks them in
  // the stages for backward.
  std::vector<Tensor5> local_skips(cache ? 0 : encoder_.size());

  Tensor5 t = x;
  for (std::size_t e = 0; e < encoder_.size(); ++e) {
    EncoderStage& st = encoder_[e];
    for (auto& blk : st.blocks) t = blk.forward(t, train_mode_, cache);
    (cache ? st.skip : local_skips[e]) = t;
    t = st.pool.forward(t, cache);
  }
  for (auto& blk : middle_) t = blk.forward(t, train_mode_, cache);
  for (std::size_t d = 0; d < decoder_.size(); ++d) {
    DecoderStage& st = decoder_[d];
    t = st.up.forward(t, cache);
    const std::size_t e = encoder_.size() - 1 - d;
    Tensor5& skip = cache ? encoder_[e].skip : local_skips[e];
    t = concat_channels(t, skip);
    if (!cache) skip = Tensor5();
    for (auto& blk : st.blocks) t = blk.forward(t, train_mode_, cache);
  }
  t = final_conv_->forward(t, cache);

  if (config_.residual) {
    for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] += x.data[i];
  }
  return t;
}

void Network::backward(const Tensor5& grad_out) {
  if (!train_mode_) throw ShapeError("Network::backward: network not in train mode");
  // The residual path adds the input untouched, so the gradient reaching
  // the final conv equals grad_out.
  Tensor5 g = final_conv_->backward(grad_out);

  for (std::size_t d = decoder_.size(); d-- > 0;) {
    DecoderStage& stage = decoder_[d];
    for (std::size_t b = stage.blocks.size(); b-- > 0;) {
      g = stage.blocks[b].backward(g);
    }
    Tensor5 g_up, g_skip;
    split_channels(g, stage.up.out_channels(), g_up, g_skip);
    encoder_[encoder_.size() - 1 - d].skip = std::move(g_skip);  // reuse slot for grad
    g = stage.up.backward(g_up);
  }

  for (std::size_t b = middle_.size(); b-- > 0;) g = middle_[b].backward(g);

  for (std::size_t e = encoder_.size(); e-- > 0;) {
    EncoderStage& stage = encoder_[e];
    g = stage.pool.backward(g);
    // decoder stage (n_stages - 1 - e) consumed this skip; its gradient was
    // parked in stage.skip above.
    Tensor5& g_skip = stage.skip;
    if (!g_skip.data.empty()) {
      for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += g_skip.data[i];
      g_skip = Tensor5();
    }
    for (std::size_t b = stage.blocks.size(); b-- > 0;) g = stage.blocks[b].backward(g);
  }
}

void Network::release_caches() {
  for (auto& st : encoder_) {
    for (auto& blk : st.blocks) blk.release_cache();
    st.pool.release_cache();
    st.skip = Tensor5();
  }
  for (auto& blk : middle_) blk.release_cache();
  for (auto& st : decoder_) {
    st.up.release_cache();
    for (auto& blk : st.blocks) blk.release_cache();
  }
  final_conv_->release_cache();
}

namespace {

void push_block_params(const std::string& prefix, ConvBlock& blk, std::vector<ParamRef>& out) {
  const int oc = blk.conv.out_channels();
  const int ic = blk.conv.in_channels();
  const int k = blk.conv.ksize();
  out.push_back({prefix + ".conv.weight", &blk.conv.weight, &blk.conv.grad_weight,
                 {oc, ic, k, k, k}});
  out.push_back({prefix + ".conv.bias", &blk.conv.bias, &blk.conv.grad_bias, {oc}});
  out.push_back({prefix + ".bn.gamma", &blk.bn.gamma, &blk.bn.grad_gamma, {oc}});
  out.push_back({prefix + ".bn.beta", &blk.bn.beta, &blk.bn.grad_beta, {oc}});
}

void push_block_state(const std::string& prefix, ConvBlock& blk, std::vector<StateRef>& out) {
  const int oc = blk.conv.out_channels();
  out.push_back({prefix + ".bn.running_mean", &blk.bn.running_mean, {oc}});
  out.push_back({prefix + ".bn.running_var", &blk.bn.running_var, {oc}});
}

}  // namespace

std::vector<ParamRef> Network::parameters() {
  std::vector<ParamRef> out;
  for (std::size_t s = 0; s < encoder_.size(); ++s) {
    for (std::size_t b = 0; b < encoder_[s].blocks.size(); ++b) {
      push_block_params("enc" + std::to_string(s + 1) + ".block" + std::to_string(b + 1),
                        encoder_[s].blocks[b], out);
    }
  }
  for (std::size_t b = 0; b < middle_.size(); ++b) {
    push_block_params("mid.block" + std::to_string(b + 1), middle_[b], out);
  }
  for (std::size_t d = 0; d < decoder_.size(); ++d) {
    DecoderStage& st = decoder_[d];
    const std::string prefix = "dec" + std::to_string(decoder_.size() - d);
    out.push_back({prefix + ".up.weight", &st.up.weight, &st.up.grad_weight,
                   {st.up.in_channels(), st.up.out_channels(), 2, 2, 2}});
    out.push_back({prefix + ".up.bias", &st.up.bias, &st.up.grad_bias, {st.up.out_channels()}});
    for (std::size_t b = 0; b < st.blocks.size(); ++b) {
      push_block_params(prefix + ".block" + std::to_string(b + 1), st.blocks[b], out);
    }
  }
  out.push_back({"final.weight", &final_conv_->weight, &final_conv_->grad_weight,
                 {1, config_.base_channels, 1, 1, 1}});
  out.push_back({"final.bias", &final_conv_->bias, &final_conv_->grad_bias, {1}});
  return out;
}

std::vector<StateRef> Network::running_state() {
  std::vector<StateRef> out;
  for (std::size_t s = 0; s < encoder_.size(); ++s) {
    for (std::size_t b = 0; b < encoder_[s].blocks.size(); ++b) {
      push_block_state("enc" + std::to_string(s + 1) + ".block" + std::to_string(b + 1),
                       encoder_[s].blocks[b], out);
    }
  }
  for (std::size_t b = 0; b < middle_.size(); ++b) {
    push_block_state("mid.block" + std::to_string(b + 1), middle_[b], out);
  }
  for (std::size_t d = 0; d < decoder_.size(); ++d) {
    const std::string prefix = "dec" + std::to_string(decoder_.size() - d);
    for (std::size_t b = 0; b < decoder_[d].blocks.size(); ++b) {
      push_block_state(prefix + ".block" + std::to_string(b + 1), decoder_[d].blocks[b], out);
    }
  }
  return out;
}

std::size_t Network::parameter_count() {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.values->size();
  return n;
}

// ---------------------------------------------------------------------------
// Adam

void AdamState::init(const std::vector<ParamRef>& params) {
  m.clear();
  v.clear();
  for (const auto& p : params) {
    m.emplace_back(p.values->size(), 0.f);
    v.emplace_back(p.values->size(), 0.f);
  }
  t = 0;
}

void adam_step(const std::vector<ParamRef>& params, AdamState& state) {
  if (state.m.size() != params.size()) {
    throw ShapeError("adam_step: state not initialized for this parameter list");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].size() != params[i].values->size()) {
      throw ShapeError("adam_step: moment shape mismatch for " + params[i].name);
    }
    for (float g : *params[i].grads) {
      if (!std::isfinite(g)) {
        throw NonFiniteGradient("adam_step: non-finite gradient in " + params[i].name);
      }
    }
  }

  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::vector<float>& val = *params[i].values;
    const std::vector<float>& grad = *params[i].grads;
    std::vector<float>& mi = state.m[i];
    std::vector<float>& vi = state.v[i];
    for (std::size_t j = 0; j < val.size(); ++j) {
      const double g = grad[j];
      const double mm = state.beta1 * mi[j] + (1.0 - state.beta1) * g;
      const double vv = state.beta2 * vi[j] + (1.0 - state.beta2) * g * g;
      mi[j] = static_cast<float>(mm);
      vi[j] = static_cast<float>(vv);
      const double mhat = mm / bc1;
      const double vhat = vv / bc2;
      val[j] = static_cast<float>(val[j] - state.lr * mhat / (std::sqrt(vhat) + state.eps));
    }
  }
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

json config_to_json(const NetworkConfig& c) {
  return json{{"n_stages", c.n_stages},
              {"base_channels", c.base_channels},
              {"convs_per_stage", c.convs_per_stage},
              {"input_dims", c.input_dims},
              {"residual", c.residual},
              {"init_seed", c.init_seed}};
}

NetworkConfig config_from_json(const json& j) {
  NetworkConfig c;
  j.at("n_stages").get_to(c.n_stages);
  j.at("base_channels").get_to(c.base_channels);
  j.at("convs_per_stage").get_to(c.convs_per_stage);
  j.at("input_dims").get_to(c.input_dims);
  j.at("residual").get_to(c.residual);
  j.at("init_seed").get_to(c.init_seed);
  return c;
}

void write_u32(std::ofstream& f, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  f.write(reinterpret_cast<const char*>(b), 4);
}

void write_floats(std::ofstream& f, const std::vector<float>& v) {
  std::vector<unsigned char> buf(v.size() * 4);
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, &v[i], 4);
    for (int k = 0; k < 4; ++k) buf[4 * i + k] = static_cast<unsigned char>((bits >> (8 * k)) & 0xff);
  }
  f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

void read_floats(std::ifstream& f, std::vector<float>& v) {
  std::vector<unsigned char> buf(v.size() * 4);
  f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (f.gcount() != static_cast<std::streamsize>(buf.size())) {
    throw FormatError("checkpoint: truncated tensor payload");
  }
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::uint32_t bits = 0;
    for (int k = 0; k < 4; ++k) bits |= static_cast<std::uint32_t>(buf[4 * i + k]) << (8 * k);
    std::memcpy(&v[i], &bits, 4);
  }
}

}  // namespace

void save_checkpoint(const std::string& path, Network& net, const AdamState* adam,
                     std::uint64_t rng_seed, const json& extra) {
  auto params = net.parameters();
  auto state = net.running_state();

  json manifest = json::array();
  for (const auto& p : params) {
    manifest.push_back({{"name", p.name}, {"shape", p.shape}, {"kind", "param"}});
  }
  for (const auto& s : state) {
    manifest.push_back({{"name", s.name}, {"shape", s.shape}, {"kind", "running"}});
  }
  if (adam) {
    for (const auto& p : params) {
      manifest.push_back({{"name", p.name}, {"shape", p.shape}, {"kind", "adam_m"}});
    }
    for (const auto& p : params) {
      manifest.push_back({{"name", p.name}, {"shape", p.shape}, {"kind", "adam_v"}});
    }
  }

  json header{{"config", config_to_json(net.config())},
              {"manifest", std::move(manifest)},
              {"step", adam ? adam->t : 0},
              {"rng_seed", rng_seed},
              {"has_running_stats", true},
              {"has_optimizer", adam != nullptr}};
  if (adam) {
    header["adam"] = {{"lr", adam->lr}, {"beta1", adam->beta1}, {"beta2", adam->beta2},
                      {"eps", adam->eps}};
  }
  if (!extra.is_null()) header["extra"] = extra;
  const std::string header_str = header.dump();

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("save_checkpoint: cannot open " + path);
  f.write("DNET", 4);
  write_u32(f, static_cast<std::uint32_t>(header_str.size()));
  f.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));

  for (const auto& p : params) write_floats(f, *p.values);
  for (const auto& s : state) write_floats(f, *s.values);
  if (adam) {
    for (const auto& mi : adam->m) write_floats(f, mi);
    for (const auto& vi : adam->v) write_floats(f, vi);
  }
  if (!f) throw FormatError("save_checkpoint: write failed for " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("load_checkpoint: cannot open " + path);
  char magic[4];
  f.read(magic, 4);
  if (f.gcount() != 4 || std::memcmp(magic, "DNET", 4) != 0) {
    throw FormatError("load_checkpoint: bad magic in " + path);
  }
  unsigned char lenb[4];
  f.read(reinterpret_cast<char*>(lenb), 4);
  if (f.gcount() != 4) throw FormatError("load_checkpoint: truncated header length");
  std::uint32_t hlen = 0;
  for (int i = 0; i < 4; ++i) hlen |= static_cast<std::uint32_t>(lenb[i]) << (8 * i);
  std::string header_str(hlen, '\0');
  f.read(header_str.data(), hlen);
  if (f.gcount() != static_cast<std::streamsize>(hlen)) {
    throw FormatError("load_checkpoint: truncated header");
  }

  json header;
  try {
    header = json::parse(header_str);
  } catch (const json::exception& e) {
    throw FormatError(std::string("load_checkpoint: bad header json: ") + e.what());
  }

  LoadedCheckpoint out{Network(config_from_json(header.at("config"))), std::nullopt, 0, {}};
  header.at("rng_seed").get_to(out.rng_seed);
  if (header.contains("extra")) out.extra = header.at("extra");

  auto params = out.net.parameters();
  auto state = out.net.running_state();
  for (auto& p : params) read_floats(f, *p.values);
  for (auto& s : state) read_floats(f, *s.values);

  if (header.value("has_optimizer", false)) {
    AdamState adam;
    adam.lr = header.at("adam").at("lr").get<double>();
    adam.beta1 = header.at("adam").at("beta1").get<double>();
    adam.beta2 = header.at("adam").at("beta2").get<double>();
    adam.eps = header.at("adam").at("eps").get<double>();
    header.at("step").get_to(adam.t);
    adam.init(params);
    adam.t = header.at("step").get<std::uint64_t>();
    for (auto& mi : adam.m) read_floats(f, mi);
    for (auto& vi : adam.v) read_floats(f, vi);
    out.adam = std::move(adam);
  }
  return out;
}

}  // namespace descatter3d
