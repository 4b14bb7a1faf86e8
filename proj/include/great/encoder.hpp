#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "great/instance.hpp"
#include "great/params.hpp"
#include "great/tensor.hpp"

namespace great {

enum class Variant { NB, NF };

inline const char* to_string(Variant v) { return v == Variant::NB ? "nb" : "nf"; }

inline Variant variant_from_string(std::string_view s) {
  if (s == "nb") return Variant::NB;
  if (s == "nf") return Variant::NF;
  throw Error("unknown variant '" + std::string(s) + "'");
}

struct GreatConfig {
  int hidden_dim = 128;
  int layers = 5;
  int heads = 8;
  Variant variant = Variant::NB;
  bool symmetric_mode = false;
  double logit_clip = 10.0;  // decoder pointer clipping constant C

  void validate() const {
    if (layers < 1) throw ConfigError("layers", "must be >= 1");
    if (heads < 1) throw ConfigError("heads", "must be >= 1");
    if (hidden_dim % (2 * heads) != 0)
      throw ConfigError("hidden_dim", "must be divisible by 2*heads");
    if (variant == Variant::NF && hidden_dim % (4 * heads) != 0)
      throw ConfigError("hidden_dim", "must be divisible by 4*heads for the nf variant");
    if (!(logit_clip > 0.0)) throw ConfigError("logit_clip", "must be positive");
  }
};

/// Row layout of the complete digraph without self-loops: for each source i,
/// all targets j != i in increasing j. m = n*(n-1) directed edges.
struct EdgeIndex {
  int n = 0;
  int m = 0;
  std::vector<int> src;
  std::vector<int> dst;
  std::vector<int> rev;  // row(i,j) -> row(j,i)

  static int row(int n, int i, int j) { return i * (n - 1) + (j > i ? j - 1 : j); }
};

inline EdgeIndex make_edge_index(int n) {
  EdgeIndex e;
  e.n = n;
  e.m = n * (n - 1);
  e.src.resize(e.m);
  e.dst.resize(e.m);
  e.rev.resize(e.m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const int r = EdgeIndex::row(n, i, j);
      e.src[r] = i;
      e.dst[r] = j;
      e.rev[r] = EdgeIndex::row(n, j, i);
    }
  return e;
}

namespace enc {

inline int raw_feature_width(Kind kind) {
  switch (kind) {
    case Kind::Tsp: return 1;
    case Kind::Cvrp: return 2;
    case Kind::Op: return 3;
  }
  return 1;
}

/// True variant of layer `l`: the last layer is always node-based so the
/// framework can read its temporary node features as node embeddings.
inline Variant layer_variant(const GreatConfig& cfg, int l) {
  return l == cfg.layers - 1 ? Variant::NB : cfg.variant;
}

inline int value_width(const GreatConfig& cfg, Variant v) {
  return v == Variant::NB ? cfg.hidden_dim / (2 * cfg.heads) : cfg.hidden_dim / (4 * cfg.heads);
}

/// Per-head key/query width. Concatenation constraints pin only the value
/// widths, so the score projections use the conventional d/H split.
inline int key_width(const GreatConfig& cfg) { return cfg.hidden_dim / cfg.heads; }

inline std::string layer_prefix(int l) { return "enc.l" + std::to_string(l); }

inline void register_encoder_params(ParameterStore& store, const GreatConfig& cfg, Kind kind) {
  cfg.validate();
  const int d = cfg.hidden_dim;
  store.add("enc.embed.w", {raw_feature_width(kind), d});
  store.add("enc.embed.b", {d});
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = layer_prefix(l);
    const Variant v = layer_variant(cfg, l);
    const int dv = value_width(cfg, v) * cfg.heads;
    const int dk = key_width(cfg) * cfg.heads;
    store.add(p + ".att.wv_out", {d, dv});
    store.add(p + ".att.wk_out", {d, dk});
    store.add(p + ".att.wq_out", {d, dk});
    if (!cfg.symmetric_mode) {
      store.add(p + ".att.wv_in", {d, dv});
      store.add(p + ".att.wk_in", {d, dk});
      store.add(p + ".att.wq_in", {d, dk});
    }
    if (v == Variant::NB)
      store.add(p + ".att.wo", cfg.symmetric_mode ? ad::Shape{d, d} : ad::Shape{2 * d, d});
    store.add(p + ".norm_att.gain", {d});
    store.add(p + ".norm_att.bias", {d});
    store.add(p + ".ff.w1", {d, 2 * d});
    store.add(p + ".ff.b1", {2 * d});
    store.add(p + ".ff.w2", {2 * d, d});
    store.add(p + ".ff.b2", {d});
    store.add(p + ".norm_ff.gain", {d});
    store.add(p + ".norm_ff.bias", {d});
  }
}

/// Layer-0 edge features. The distance is always channel 0; CVRP adds the
/// target node's normalized demand to every edge pointing at it, OP adds the
/// target prize and the instance budget the same way.
inline ad::Tensor embed_raw_edges(ad::Tape& tape, BoundParams& bp, const RoutingInstance& inst,
                                  const EdgeIndex& ei) {
  const int f = raw_feature_width(inst.kind);
  if (inst.kind == Kind::Cvrp &&
      (inst.demands.size() != static_cast<std::size_t>(inst.n()) || inst.capacity <= 0))
    throw Error("cvrp instance is missing demands or capacity");
  if (inst.kind == Kind::Op && inst.prizes.size() != static_cast<std::size_t>(inst.n()))
    throw Error("op instance is missing prizes");
  ad::Buffer raw(static_cast<std::size_t>(ei.m) * f);
  for (int r = 0; r < ei.m; ++r) {
    raw[static_cast<std::size_t>(r) * f] = inst.dist.at(ei.src[r], ei.dst[r]);
    if (inst.kind == Kind::Cvrp)
      raw[static_cast<std::size_t>(r) * f + 1] =
          static_cast<double>(inst.demands[ei.dst[r]]) / inst.capacity;
    if (inst.kind == Kind::Op) {
      raw[static_cast<std::size_t>(r) * f + 1] = inst.prizes[ei.dst[r]];
      raw[static_cast<std::size_t>(r) * f + 2] = inst.budget;
    }
  }
  ad::Tensor x = tape.input({ei.m, f}, std::move(raw));
  ad::Tensor w = bp("enc.embed.w");
  ad::Tensor b = bp("enc.embed.b");
  return ad::linear(x, w, &b);
}

/// Per-head attention weights over out-neighborhoods. `edges` must be laid out
/// so each source's edges form one contiguous block of n-1 rows; the score of
/// an edge is the scaled dot product of its own key and query projections.
inline std::vector<ad::Tensor> neighborhood_attention(ad::Tape&, const ad::Tensor& keys,
                                                      const ad::Tensor& queries, int n, int heads,
                                                      int dk, double inv_sqrt_d) {
  std::vector<ad::Tensor> alphas;
  alphas.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    ad::Tensor k = ad::slice_cols(keys, h * dk, dk);
    ad::Tensor q = ad::slice_cols(queries, h * dk, dk);
    ad::Tensor s = ad::scale(ad::rowdot(k, q), inv_sqrt_d);
    alphas.push_back(ad::softmax_masked(ad::reshape(s, {n, n - 1})));
  }
  return alphas;
}

struct AttentionSublayerOut {
  ad::Tensor edges;       // [m, d]
  ad::Tensor node_feats;  // [n, d]; defined for NB only
};

/// Both variants share the same per-node pooling: for every node, an
/// attention-weighted sum over its outgoing edges and one over its incoming
/// edges, per head. NB concatenates the two pools of each endpoint pair and
/// projects; NF emits the four pools of (src, dst) directly.
inline AttentionSublayerOut attention_sublayer(ad::Tape& tape, BoundParams& bp,
                                               const ad::Tensor& edges, const EdgeIndex& ei,
                                               const GreatConfig& cfg, int layer, Variant v) {
  const int d = cfg.hidden_dim;
  const int heads = cfg.heads;
  const int dv = value_width(cfg, v);
  const int dk = key_width(cfg);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  const std::string p = layer_prefix(layer) + ".att.";
  const char* in_suffix = cfg.symmetric_mode ? "_out" : "_in";

  ad::Tensor rev = ad::permute_rows(edges, ei.rev);  // row(i,j) holds e(j,i)

  ad::Tensor values_out = ad::linear(edges, bp(p + "wv_out"));
  ad::Tensor keys_out = ad::linear(edges, bp(p + "wk_out"));
  ad::Tensor queries_out = ad::linear(edges, bp(p + "wq_out"));
  ad::Tensor values_in = ad::linear(rev, bp(p + "wv" + in_suffix));
  ad::Tensor keys_in = ad::linear(rev, bp(p + "wk" + in_suffix));
  ad::Tensor queries_in = ad::linear(rev, bp(p + "wq" + in_suffix));

  auto alpha_out = neighborhood_attention(tape, keys_out, queries_out, ei.n, heads, dk, inv_sqrt_d);
  auto alpha_in = neighborhood_attention(tape, keys_in, queries_in, ei.n, heads, dk, inv_sqrt_d);

  std::vector<ad::Tensor> node_parts;  // NB: per head (out || in)
  std::vector<ad::Tensor> edge_parts;  // NF: per head (out_i || in_i || out_j || in_j)
  for (int h = 0; h < heads; ++h) {
    ad::Tensor pool_out = ad::attention_pool(ad::slice_cols(values_out, h * dv, dv), alpha_out[h]);
    ad::Tensor pool_in = ad::attention_pool(ad::slice_cols(values_in, h * dv, dv), alpha_in[h]);
    if (v == Variant::NB) {
      node_parts.push_back(pool_out);
      node_parts.push_back(pool_in);
    } else {
      edge_parts.push_back(ad::gather_rows(pool_out, ei.src));
      edge_parts.push_back(ad::gather_rows(pool_in, ei.src));
      edge_parts.push_back(ad::gather_rows(pool_out, ei.dst));
      edge_parts.push_back(ad::gather_rows(pool_in, ei.dst));
    }
  }

  AttentionSublayerOut out;
  if (v == Variant::NB) {
    ad::Tensor x = ad::concat_cols(node_parts);  // [n, d]
    ad::Tensor xs = ad::gather_rows(x, ei.src);
    ad::Tensor xd = ad::gather_rows(x, ei.dst);
    // symmetric mode also ties the two halves of the output projection so a
    // symmetric input stays symmetric through the layer
    out.edges = cfg.symmetric_mode ? ad::linear(ad::add(xs, xd), bp(p + "wo"))
                                   : ad::linear(ad::concat_cols({xs, xd}), bp(p + "wo"));
    out.node_feats = x;
  } else {
    out.edges = ad::concat_cols(edge_parts);  // [m, 4*dv*heads] == [m, d]
  }
  return out;
}

inline AttentionSublayerOut nb_attention_sublayer(ad::Tape& tape, BoundParams& bp,
                                                  const ad::Tensor& edges, const EdgeIndex& ei,
                                                  const GreatConfig& cfg, int layer) {
  return attention_sublayer(tape, bp, edges, ei, cfg, layer, Variant::NB);
}

inline ad::Tensor nf_attention_sublayer(ad::Tape& tape, BoundParams& bp, const ad::Tensor& edges,
                                        const EdgeIndex& ei, const GreatConfig& cfg, int layer) {
  return attention_sublayer(tape, bp, edges, ei, cfg, layer, Variant::NF).edges;
}

/// Position-wise feedforward with the 2x up-projection.
inline ad::Tensor ff_sublayer(ad::Tape&, BoundParams& bp, const ad::Tensor& edges, int layer) {
  const std::string p = layer_prefix(layer) + ".ff.";
  ad::Tensor w1 = bp(p + "w1"), b1 = bp(p + "b1"), w2 = bp(p + "w2"), b2 = bp(p + "b2");
  return ad::linear(ad::relu(ad::linear(edges, w1, &b1)), w2, &b2);
}

inline ad::Tensor residual_norm(ad::Tape&, BoundParams& bp, const ad::Tensor& input,
                                const ad::Tensor& sublayer_out, const std::string& norm_name) {
  ad::Tensor gain = bp(norm_name + ".gain");
  ad::Tensor bias = bp(norm_name + ".bias");
  return ad::layer_norm(ad::add(input, sublayer_out), gain, bias);
}

struct EncodeOut {
  ad::Tensor edges;  // [n(n-1), d]
  ad::Tensor nodes;  // [n, d], from the last attention sublayer
};

inline EncodeOut encode(ad::Tape& tape, BoundParams& bp, const RoutingInstance& inst,
                        const GreatConfig& cfg) {
  cfg.validate();
  const EdgeIndex ei = make_edge_index(inst.n());
  ad::Tensor e = embed_raw_edges(tape, bp, inst, ei);
  EncodeOut out;
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = layer_prefix(l);
    AttentionSublayerOut att = attention_sublayer(tape, bp, e, ei, cfg, l, layer_variant(cfg, l));
    e = residual_norm(tape, bp, e, att.edges, p + ".norm_att");
    e = residual_norm(tape, bp, e, ff_sublayer(tape, bp, e, l), p + ".norm_ff");
    if (l == cfg.layers - 1) out.nodes = att.node_feats;
  }
  out.edges = e;
  return out;
}

}  // namespace enc

/// Pairwise cosine similarity and Euclidean distance between node encodings.
struct NodeSimilarity {
  int n = 0;
  std::vector<double> cosine;   // n*n row-major
  std::vector<double> euclid;
};

inline NodeSimilarity node_similarity(ParameterStore& store, const RoutingInstance& inst,
                                      const GreatConfig& cfg) {
  ad::Tape tape;
  tape.grad_enabled = false;
  BoundParams bp(tape, store);
  enc::EncodeOut out = enc::encode(tape, bp, inst, cfg);
  const int n = inst.n();
  const int d = cfg.hidden_dim;
  const ad::Buffer& h = out.nodes.data();
  NodeSimilarity sim;
  sim.n = n;
  sim.cosine.assign(static_cast<std::size_t>(n) * n, 0.0);
  sim.euclid.assign(static_cast<std::size_t>(n) * n, 0.0);
  std::vector<double> norms(n, 0.0);
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int c = 0; c < d; ++c) s += h[static_cast<std::size_t>(i) * d + c] * h[static_cast<std::size_t>(i) * d + c];
    norms[i] = std::sqrt(s);
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double dot = 0.0, dist2 = 0.0;
      for (int c = 0; c < d; ++c) {
        const double a = h[static_cast<std::size_t>(i) * d + c];
        const double b = h[static_cast<std::size_t>(j) * d + c];
        dot += a * b;
        dist2 += (a - b) * (a - b);
      }
      const double denom = std::max(norms[i] * norms[j], 1e-300);
      sim.cosine[static_cast<std::size_t>(i) * n + j] = i == j ? 1.0 : dot / denom;
      sim.euclid[static_cast<std::size_t>(i) * n + j] = i == j ? 0.0 : std::sqrt(dist2);
    }
  return sim;
}

/// CSV dump with header "i,j,cosine,euclidean", one line per ordered pair.
inline void dump_node_similarity(ParameterStore& store, const RoutingInstance& inst,
                                 const GreatConfig& cfg, const std::string& path) {
  NodeSimilarity sim = node_similarity(store, inst, cfg);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << "i,j,cosine,euclidean\n";
  char buf[96];
  for (int i = 0; i < sim.n; ++i)
    for (int j = 0; j < sim.n; ++j) {
      std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.17g\n", i, j,
                    sim.cosine[static_cast<std::size_t>(i) * sim.n + j],
                    sim.euclid[static_cast<std::size_t>(i) * sim.n + j]);
      out << buf;
    }
}

}  // namespace great
