#include "desta/adapter.hpp"

#include <cmath>
#include <cstring>
#include <limits>

#include "desta/error.hpp"
#include "desta/sha256.hpp"

namespace desta {

namespace {

constexpr double kLayerNormEps = 1e-5;

void shape_check(bool ok, const std::string& what) {
  if (!ok) throw ValidationError("dimension mismatch: " + what);
}

Matrix linear_fwd(const Matrix& x, const LinearParams& p) {
  Matrix y = matmul(x, p.w);
  add_row_bias(y, p.b);
  return y;
}

// accumulates dW/db into g, returns dx
Matrix linear_bwd(const Matrix& dy, const Matrix& x, const LinearParams& p,
                  LinearParams& g) {
  add_inplace(g.w, matmul_tn(x, dy));
  add_col_sums(g.b, dy);
  return matmul_nt(dy, p.w);
}

struct LnCache {
  Matrix xhat;
  std::vector<double> rstd;
};

Matrix layer_norm_fwd(const Matrix& x, const LayerNormParams& p, LnCache& c) {
  const size_t cols = x.cols;
  c.xhat = Matrix(x.rows, cols);
  c.rstd.assign(x.rows, 0.0);
  Matrix y(x.rows, cols);
  for (size_t r = 0; r < x.rows; ++r) {
    const double* xr = x.row(r);
    double mean = 0.0;
    for (size_t j = 0; j < cols; ++j) mean += xr[j];
    mean /= double(cols);
    double var = 0.0;
    for (size_t j = 0; j < cols; ++j) {
      double d = xr[j] - mean;
      var += d * d;
    }
    var /= double(cols);
    double rstd = 1.0 / std::sqrt(var + kLayerNormEps);
    c.rstd[r] = rstd;
    double* hr = c.xhat.row(r);
    double* yr = y.row(r);
    for (size_t j = 0; j < cols; ++j) {
      hr[j] = (xr[j] - mean) * rstd;
      yr[j] = hr[j] * p.gain[j] + p.offset[j];
    }
  }
  return y;
}

Matrix layer_norm_bwd(const Matrix& dy, const LnCache& c,
                      const LayerNormParams& p, LayerNormParams& g) {
  const size_t cols = dy.cols;
  Matrix dx(dy.rows, cols);
  for (size_t r = 0; r < dy.rows; ++r) {
    const double* dyr = dy.row(r);
    const double* hr = c.xhat.row(r);
    double m1 = 0.0, m2 = 0.0;
    for (size_t j = 0; j < cols; ++j) {
      g.gain[j] += dyr[j] * hr[j];
      g.offset[j] += dyr[j];
      double dxh = dyr[j] * p.gain[j];
      m1 += dxh;
      m2 += dxh * hr[j];
    }
    m1 /= double(cols);
    m2 /= double(cols);
    double* dxr = dx.row(r);
    for (size_t j = 0; j < cols; ++j) {
      double dxh = dyr[j] * p.gain[j];
      dxr[j] = c.rstd[r] * (dxh - m1 - hr[j] * m2);
    }
  }
  return dx;
}

struct MhaCache {
  Matrix q, k, v;
  std::vector<Matrix> probs;  // one [rows_q, rows_kv] per head
  Matrix ctx;
};

Matrix mha_forward(const Matrix& xq, const Matrix& xkv, const LinearParams& wq,
                   const LinearParams& wk, const LinearParams& wv,
                   const LinearParams& wo, size_t n_heads, MhaCache& cache) {
  const size_t d = wq.w.cols;
  const size_t hd = d / n_heads;
  const double scale = 1.0 / std::sqrt(double(hd));

  Matrix q = linear_fwd(xq, wq);
  Matrix k = linear_fwd(xkv, wk);
  Matrix v = linear_fwd(xkv, wv);

  Matrix ctx(q.rows, d);
  std::vector<Matrix> probs(n_heads);
  for (size_t h = 0; h < n_heads; ++h) {
    const size_t off = h * hd;
    Matrix p(q.rows, k.rows);
    for (size_t i = 0; i < q.rows; ++i) {
      const double* qi = q.row(i) + off;
      double* pi = p.row(i);
      double maxv = -std::numeric_limits<double>::infinity();
      for (size_t j = 0; j < k.rows; ++j) {
        const double* kj = k.row(j) + off;
        double acc = 0.0;
        for (size_t x = 0; x < hd; ++x) acc += qi[x] * kj[x];
        pi[j] = acc * scale;
        maxv = std::max(maxv, pi[j]);
      }
      double sum = 0.0;
      for (size_t j = 0; j < k.rows; ++j) {
        pi[j] = std::exp(pi[j] - maxv);
        sum += pi[j];
      }
      for (size_t j = 0; j < k.rows; ++j) pi[j] /= sum;

      double* ci = ctx.row(i) + off;
      for (size_t j = 0; j < k.rows; ++j) {
        const double* vj = v.row(j) + off;
        const double pj = pi[j];
        for (size_t x = 0; x < hd; ++x) ci[x] += pj * vj[x];
      }
    }
    probs[h] = std::move(p);
  }
  Matrix out = linear_fwd(ctx, wo);
  cache.q = std::move(q);
  cache.k = std::move(k);
  cache.v = std::move(v);
  cache.probs = std::move(probs);
  cache.ctx = std::move(ctx);
  return out;
}

// accumulates weight grads; writes fresh dxq/dxkv
void mha_backward(const Matrix& dout, const MhaCache& c, const Matrix& xq,
                  const Matrix& xkv, const LinearParams& wq,
                  const LinearParams& wk, const LinearParams& wv,
                  const LinearParams& wo, LinearParams& gq, LinearParams& gk,
                  LinearParams& gv, LinearParams& go, size_t n_heads,
                  Matrix& dxq, Matrix& dxkv) {
  const size_t d = wq.w.cols;
  const size_t hd = d / n_heads;
  const double scale = 1.0 / std::sqrt(double(hd));

  add_inplace(go.w, matmul_tn(c.ctx, dout));
  add_col_sums(go.b, dout);
  Matrix dctx = matmul_nt(dout, wo.w);

  Matrix dq(c.q.rows, d), dk(c.k.rows, d), dv(c.v.rows, d);
  std::vector<double> dp(c.k.rows);
  for (size_t h = 0; h < n_heads; ++h) {
    const size_t off = h * hd;
    const Matrix& p = c.probs[h];
    for (size_t i = 0; i < c.q.rows; ++i) {
      const double* dci = dctx.row(i) + off;
      const double* pi = p.row(i);
      double dot = 0.0;
      for (size_t j = 0; j < c.k.rows; ++j) {
        const double* vj = c.v.row(j) + off;
        double acc = 0.0;
        for (size_t x = 0; x < hd; ++x) acc += dci[x] * vj[x];
        dp[j] = acc;
        dot += acc * pi[j];
        double* dvj = dv.row(j) + off;
        for (size_t x = 0; x < hd; ++x) dvj[x] += pi[j] * dci[x];
      }
      double* dqi = dq.row(i) + off;
      const double* qi = c.q.row(i) + off;
      for (size_t j = 0; j < c.k.rows; ++j) {
        double ds = pi[j] * (dp[j] - dot) * scale;
        if (ds == 0.0) continue;
        const double* kj = c.k.row(j) + off;
        double* dkj = dk.row(j) + off;
        for (size_t x = 0; x < hd; ++x) {
          dqi[x] += ds * kj[x];
          dkj[x] += ds * qi[x];
        }
      }
    }
  }

  dxq = linear_bwd(dq, xq, wq, gq);
  dxkv = linear_bwd(dk, xkv, wk, gk);
  add_inplace(dxkv, linear_bwd(dv, xkv, wv, gv));
}

double gelu(double z) { return 0.5 * z * (1.0 + std::erf(z * M_SQRT1_2)); }

double gelu_grad(double z) {
  return 0.5 * (1.0 + std::erf(z * M_SQRT1_2)) +
         z * std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
}

struct BlockCache {
  LnCache ln_self;
  Matrix n_self;
  MhaCache self_attn;
  LnCache ln_cross;
  Matrix n_cross;
  MhaCache cross_attn;
  LnCache ln_ffn;
  Matrix n_ffn;
  Matrix ffn_z;  // pre-activation
  Matrix ffn_a;  // gelu(z)
};

}  // namespace

struct AdapterForwardCache {
  const AdapterParams* params = nullptr;
  const EncoderStates* states = nullptr;
  AdapterConfig config;
  std::vector<double> layer_weights;
  Matrix frames;
  Matrix mapped;
  Matrix final_x;  // input to the output projection
  std::vector<BlockCache> blocks;
};

AdapterForwardCache* new_adapter_cache() { return new AdapterForwardCache(); }
void free_adapter_cache(AdapterForwardCache* cache) { delete cache; }

void AdapterConfig::validate() const {
  if (n_queries < 1 || d_model < 1 || d_enc < 1 || d_llm < 1 ||
      n_enc_layers < 1 || n_heads < 1 || ffn_mult < 1)
    throw ValidationError("adapter config: all dimensions must be >= 1");
  if (d_model % n_heads != 0)
    throw ValidationError("adapter config: d_model " + std::to_string(d_model) +
                          " not divisible by n_heads " + std::to_string(n_heads));
  if (!use_input_map && d_enc != d_model)
    throw ValidationError("adapter config: dropping the input map needs d_enc == d_model");
  if (!use_output_proj && d_model != d_llm)
    throw ValidationError("adapter config: dropping the output projection needs d_model == d_llm");
}

std::vector<double> softmax(const std::vector<double>& logits) {
  double maxv = -std::numeric_limits<double>::infinity();
  for (double v : logits) maxv = std::max(maxv, v);
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - maxv);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

Matrix layer_weighted_sum(const EncoderStates& states,
                          const std::vector<double>& layer_logits) {
  shape_check(states.n_layers == layer_logits.size(),
              "encoder states have " + std::to_string(states.n_layers) +
                  " layers but layer_logits has " +
                  std::to_string(layer_logits.size()));
  for (double v : states.data) {
    if (!std::isfinite(v))
      throw ValidationError("non-finite value in encoder states");
  }
  std::vector<double> w = softmax(layer_logits);
  Matrix out(states.frames, states.d_enc);
  for (size_t l = 0; l < states.n_layers; ++l) {
    const double wl = w[l];
    const double* src = &states.data[l * states.frames * states.d_enc];
    for (size_t i = 0; i < states.frames * states.d_enc; ++i)
      out.data[i] += wl * src[i];
  }
  return out;
}

SpeechFeatures adapter_forward(const EncoderStates& states,
                               const AdapterParams& params,
                               const AdapterConfig& config,
                               AdapterForwardCache* cache) {
  config.validate();
  shape_check(states.d_enc == config.d_enc,
              "encoder states d_enc=" + std::to_string(states.d_enc) +
                  " vs config d_enc=" + std::to_string(config.d_enc));
  shape_check(states.n_layers == config.n_enc_layers,
              "encoder states n_layers=" + std::to_string(states.n_layers) +
                  " vs config n_enc_layers=" + std::to_string(config.n_enc_layers));
  shape_check(states.frames >= 1, "encoder states need at least one frame");
  shape_check(params.queries.rows == config.n_queries &&
                  params.queries.cols == config.d_model,
              "queries tensor does not match (n_queries, d_model)");
  shape_check(params.blocks.size() == config.n_blocks,
              "params have " + std::to_string(params.blocks.size()) +
                  " blocks vs config n_blocks=" + std::to_string(config.n_blocks));

  Matrix frames = layer_weighted_sum(states, params.layer_logits);
  Matrix mapped =
      config.use_input_map ? linear_fwd(frames, params.input_map) : frames;

  std::vector<BlockCache> block_caches(config.n_blocks);
  Matrix x = params.queries;
  for (size_t b = 0; b < config.n_blocks; ++b) {
    const BlockParams& bp = params.blocks[b];
    BlockCache& bc = block_caches[b];

    bc.n_self = layer_norm_fwd(x, bp.ln_self, bc.ln_self);
    Matrix sa = mha_forward(bc.n_self, bc.n_self, bp.sa_q, bp.sa_k, bp.sa_v,
                            bp.sa_o, config.n_heads, bc.self_attn);
    add_inplace(x, sa);

    bc.n_cross = layer_norm_fwd(x, bp.ln_cross, bc.ln_cross);
    Matrix ca = mha_forward(bc.n_cross, mapped, bp.ca_q, bp.ca_k, bp.ca_v,
                            bp.ca_o, config.n_heads, bc.cross_attn);
    add_inplace(x, ca);

    bc.n_ffn = layer_norm_fwd(x, bp.ln_ffn, bc.ln_ffn);
    bc.ffn_z = linear_fwd(bc.n_ffn, bp.ffn_in);
    bc.ffn_a = Matrix(bc.ffn_z.rows, bc.ffn_z.cols);
    for (size_t i = 0; i < bc.ffn_z.data.size(); ++i)
      bc.ffn_a.data[i] = gelu(bc.ffn_z.data[i]);
    Matrix f = linear_fwd(bc.ffn_a, bp.ffn_out);
    add_inplace(x, f);
  }

  Matrix out = config.use_output_proj ? linear_fwd(x, params.output_proj) : x;

  if (cache) {
    cache->params = &params;
    cache->states = &states;
    cache->config = config;
    cache->layer_weights = softmax(params.layer_logits);
    cache->frames = std::move(frames);
    cache->mapped = std::move(mapped);
    cache->final_x = std::move(x);
    cache->blocks = std::move(block_caches);
  }
  return out;
}

void adapter_backward(const Matrix& grad_out, const AdapterForwardCache& cache,
                      const AdapterParams& params, const AdapterConfig& config,
                      AdapterParams& grads) {
  if (cache.params != &params || cache.states == nullptr)
    throw ValidationError("stale adapter cache: forward ran with different params");
  if (cache.blocks.size() != config.n_blocks)
    throw ValidationError("stale adapter cache: block count mismatch");
  const size_t out_cols = config.use_output_proj ? config.d_llm : config.d_model;
  shape_check(grad_out.rows == config.n_queries && grad_out.cols == out_cols,
              "grad_out shape does not match [n_queries, d_llm]");

  Matrix dx = config.use_output_proj
                  ? linear_bwd(grad_out, cache.final_x, params.output_proj,
                               grads.output_proj)
                  : grad_out;

  Matrix dmapped(cache.mapped.rows, cache.mapped.cols);
  for (size_t b = config.n_blocks; b-- > 0;) {
    const BlockParams& bp = params.blocks[b];
    BlockParams& gp = grads.blocks[b];
    const BlockCache& bc = cache.blocks[b];

    // ffn (pre-norm, residual): x3 = x2 + ffn_out(gelu(ffn_in(ln(x2))))
    Matrix da = linear_bwd(dx, bc.ffn_a, bp.ffn_out, gp.ffn_out);
    Matrix dz(da.rows, da.cols);
    for (size_t i = 0; i < da.data.size(); ++i)
      dz.data[i] = da.data[i] * gelu_grad(bc.ffn_z.data[i]);
    Matrix dn3 = linear_bwd(dz, bc.n_ffn, bp.ffn_in, gp.ffn_in);
    add_inplace(dx, layer_norm_bwd(dn3, bc.ln_ffn, bp.ln_ffn, gp.ln_ffn));

    // cross-attention: queries attend to the mapped frames
    Matrix dn2, dmem;
    mha_backward(dx, bc.cross_attn, bc.n_cross, cache.mapped, bp.ca_q, bp.ca_k,
                 bp.ca_v, bp.ca_o, gp.ca_q, gp.ca_k, gp.ca_v, gp.ca_o,
                 config.n_heads, dn2, dmem);
    add_inplace(dmapped, dmem);
    add_inplace(dx, layer_norm_bwd(dn2, bc.ln_cross, bp.ln_cross, gp.ln_cross));

    // self-attention over the queries
    Matrix dn1q, dn1kv;
    mha_backward(dx, bc.self_attn, bc.n_self, bc.n_self, bp.sa_q, bp.sa_k,
                 bp.sa_v, bp.sa_o, gp.sa_q, gp.sa_k, gp.sa_v, gp.sa_o,
                 config.n_heads, dn1q, dn1kv);
    add_inplace(dn1q, dn1kv);
    add_inplace(dx, layer_norm_bwd(dn1q, bc.ln_self, bp.ln_self, gp.ln_self));
  }
  add_inplace(grads.queries, dx);

  Matrix dframes = config.use_input_map
                       ? linear_bwd(dmapped, cache.frames, params.input_map,
                                    grads.input_map)
                       : std::move(dmapped);

  const EncoderStates& st = *cache.states;
  const std::vector<double>& w = cache.layer_weights;
  std::vector<double> dw(st.n_layers, 0.0);
  for (size_t l = 0; l < st.n_layers; ++l) {
    const double* src = &st.data[l * st.frames * st.d_enc];
    double acc = 0.0;
    for (size_t i = 0; i < st.frames * st.d_enc; ++i)
      acc += dframes.data[i] * src[i];
    dw[l] = acc;
  }
  double dot = 0.0;
  for (size_t l = 0; l < st.n_layers; ++l) dot += w[l] * dw[l];
  for (size_t l = 0; l < st.n_layers; ++l)
    grads.layer_logits[l] += w[l] * (dw[l] - dot);
}

namespace {

void push_linear_tally(std::vector<std::pair<std::string, size_t>>& out,
                       const std::string& name, size_t in, size_t out_dim) {
  out.emplace_back(name + ".weight", in * out_dim);
  out.emplace_back(name + ".bias", out_dim);
}

void push_ln_tally(std::vector<std::pair<std::string, size_t>>& out,
                   const std::string& name, size_t d) {
  out.emplace_back(name + ".gain", d);
  out.emplace_back(name + ".offset", d);
}

}  // namespace

// Must stay in step with tensor_refs; a unit test pins the equivalence.
std::vector<std::pair<std::string, size_t>> param_tally(const AdapterConfig& c) {
  c.validate();
  std::vector<std::pair<std::string, size_t>> out;
  out.emplace_back("queries", c.n_queries * c.d_model);
  out.emplace_back("layer_logits", c.n_enc_layers);
  if (c.use_input_map) push_linear_tally(out, "input_map", c.d_enc, c.d_model);
  for (size_t b = 0; b < c.n_blocks; ++b) {
    std::string p = "blocks." + std::to_string(b) + ".";
    push_ln_tally(out, p + "ln_self", c.d_model);
    for (const char* n : {"self_attn.q", "self_attn.k", "self_attn.v", "self_attn.o"})
      push_linear_tally(out, p + n, c.d_model, c.d_model);
    push_ln_tally(out, p + "ln_cross", c.d_model);
    for (const char* n : {"cross_attn.q", "cross_attn.k", "cross_attn.v", "cross_attn.o"})
      push_linear_tally(out, p + n, c.d_model, c.d_model);
    push_ln_tally(out, p + "ln_ffn", c.d_model);
    push_linear_tally(out, p + "ffn.in", c.d_model, c.ffn_mult * c.d_model);
    push_linear_tally(out, p + "ffn.out", c.ffn_mult * c.d_model, c.d_model);
  }
  if (c.use_output_proj)
    push_linear_tally(out, "output_proj", c.d_model, c.d_llm);
  return out;
}

size_t count_trainable_params(const AdapterConfig& config) {
  size_t total = 0;
  for (const auto& [name, n] : param_tally(config)) total += n;
  return total;
}

namespace {

void push_linear_refs(std::vector<TensorRef>& out, const std::string& name,
                      LinearParams& p) {
  out.push_back({name + ".weight", p.w.data.data(), p.w.data.size(),
                 {p.w.rows, p.w.cols}});
  out.push_back({name + ".bias", p.b.data(), p.b.size(), {p.b.size()}});
}

void push_ln_refs(std::vector<TensorRef>& out, const std::string& name,
                  LayerNormParams& p) {
  out.push_back({name + ".gain", p.gain.data(), p.gain.size(), {p.gain.size()}});
  out.push_back(
      {name + ".offset", p.offset.data(), p.offset.size(), {p.offset.size()}});
}

}  // namespace

std::vector<TensorRef> tensor_refs(AdapterParams& params) {
  std::vector<TensorRef> out;
  out.push_back({"queries", params.queries.data.data(), params.queries.size(),
                 {params.queries.rows, params.queries.cols}});
  out.push_back({"layer_logits", params.layer_logits.data(),
                 params.layer_logits.size(), {params.layer_logits.size()}});
  if (!params.input_map.w.empty()) push_linear_refs(out, "input_map", params.input_map);
  for (size_t b = 0; b < params.blocks.size(); ++b) {
    std::string p = "blocks." + std::to_string(b) + ".";
    BlockParams& bp = params.blocks[b];
    push_ln_refs(out, p + "ln_self", bp.ln_self);
    push_linear_refs(out, p + "self_attn.q", bp.sa_q);
    push_linear_refs(out, p + "self_attn.k", bp.sa_k);
    push_linear_refs(out, p + "self_attn.v", bp.sa_v);
    push_linear_refs(out, p + "self_attn.o", bp.sa_o);
    push_ln_refs(out, p + "ln_cross", bp.ln_cross);
    push_linear_refs(out, p + "cross_attn.q", bp.ca_q);
    push_linear_refs(out, p + "cross_attn.k", bp.ca_k);
    push_linear_refs(out, p + "cross_attn.v", bp.ca_v);
    push_linear_refs(out, p + "cross_attn.o", bp.ca_o);
    push_ln_refs(out, p + "ln_ffn", bp.ln_ffn);
    push_linear_refs(out, p + "ffn.in", bp.ffn_in);
    push_linear_refs(out, p + "ffn.out", bp.ffn_out);
  }
  if (!params.output_proj.w.empty())
    push_linear_refs(out, "output_proj", params.output_proj);
  return out;
}

namespace {

LinearParams make_linear(size_t in, size_t out) {
  LinearParams p;
  p.w = Matrix(in, out);
  p.b.assign(out, 0.0);
  return p;
}

LayerNormParams make_ln(size_t d) {
  LayerNormParams p;
  p.gain.assign(d, 0.0);
  p.offset.assign(d, 0.0);
  return p;
}

}  // namespace

AdapterParams make_adapter_params(const AdapterConfig& c) {
  c.validate();
  AdapterParams p;
  p.queries = Matrix(c.n_queries, c.d_model);
  p.layer_logits.assign(c.n_enc_layers, 0.0);
  if (c.use_input_map) p.input_map = make_linear(c.d_enc, c.d_model);
  p.blocks.resize(c.n_blocks);
  for (auto& b : p.blocks) {
    b.ln_self = make_ln(c.d_model);
    b.sa_q = make_linear(c.d_model, c.d_model);
    b.sa_k = make_linear(c.d_model, c.d_model);
    b.sa_v = make_linear(c.d_model, c.d_model);
    b.sa_o = make_linear(c.d_model, c.d_model);
    b.ln_cross = make_ln(c.d_model);
    b.ca_q = make_linear(c.d_model, c.d_model);
    b.ca_k = make_linear(c.d_model, c.d_model);
    b.ca_v = make_linear(c.d_model, c.d_model);
    b.ca_o = make_linear(c.d_model, c.d_model);
    b.ln_ffn = make_ln(c.d_model);
    b.ffn_in = make_linear(c.d_model, c.ffn_mult * c.d_model);
    b.ffn_out = make_linear(c.ffn_mult * c.d_model, c.d_model);
  }
  if (c.use_output_proj) p.output_proj = make_linear(c.d_model, c.d_llm);
  return p;
}

namespace {

void init_linear(LinearParams& p, DetRng& rng) {
  double bound = 1.0 / std::sqrt(double(p.w.rows));
  for (double& v : p.w.data) v = rng.next_uniform(-bound, bound);
  // biases stay zero
}

void init_ln(LayerNormParams& p) {
  for (double& v : p.gain) v = 1.0;
}

}  // namespace

AdapterParams init_adapter_params(const AdapterConfig& c, uint64_t seed) {
  AdapterParams p = make_adapter_params(c);
  DetRng rng(mix64(seed, 0x61646170ULL));

  for (double& v : p.queries.data) v = 0.02 * rng.next_normal();
  // layer logits zero: start from the arithmetic mean of the layers

  if (c.use_input_map) {
    if (c.d_enc == c.d_model) {
      for (size_t i = 0; i < c.d_enc; ++i) p.input_map.w.at(i, i) = 1.0;
    } else {
      init_linear(p.input_map, rng);
    }
  }
  for (auto& b : p.blocks) {
    init_ln(b.ln_self);
    init_linear(b.sa_q, rng);
    init_linear(b.sa_k, rng);
    init_linear(b.sa_v, rng);
    init_linear(b.sa_o, rng);
    init_ln(b.ln_cross);
    init_linear(b.ca_q, rng);
    init_linear(b.ca_k, rng);
    init_linear(b.ca_v, rng);
    init_linear(b.ca_o, rng);
    init_ln(b.ln_ffn);
    init_linear(b.ffn_in, rng);
    init_linear(b.ffn_out, rng);
  }
  if (c.use_output_proj) init_linear(p.output_proj, rng);
  return p;
}

EncoderStates mock_encoder(const std::string& record_id,
                           double audio_duration_s, const AdapterConfig& config,
                           uint64_t seed, double frames_per_s) {
  if (audio_duration_s < 0)
    throw ValidationError("mock_encoder: negative duration");
  size_t frames = size_t(std::llround(audio_duration_s * frames_per_s));
  if (frames < 1) frames = 1;
  EncoderStates states(config.n_enc_layers, frames, config.d_enc);
  DetRng rng(mix64(fnv1a64(record_id), seed));
  for (double& v : states.data) v = rng.next_normal();
  return states;
}

std::string encoder_states_digest(const EncoderStates& states) {
  std::string header = std::to_string(states.n_layers) + "x" +
                       std::to_string(states.frames) + "x" +
                       std::to_string(states.d_enc) + ":";
  return sha256_hex(header + std::string(reinterpret_cast<const char*>(
                                             states.data.data()),
                                         states.data.size() * sizeof(double)));
}

}  // namespace desta
