#pragma once

// Node classifiers: logistic regression, MLP, GCN, relational GCN and MixHop GCN,
// each ending in a one-unit affine head and a sigmoid.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "dgsum/autodiff.hpp"
#include "dgsum/corpus.hpp"
#include "dgsum/demb.hpp"
#include "dgsum/errors.hpp"
#include "dgsum/graph.hpp"
#include "json.hpp"

namespace dgsum {

enum class ModelKind { LogReg, MLP, GCN, RGCN, MixHop };

inline constexpr std::array<std::string_view, 5> kModelKindNames{"LogReg", "MLP", "GCN", "RGCN", "MixHop"};

inline std::string_view model_kind_name(ModelKind k) { return kModelKindNames[static_cast<std::size_t>(k)]; }

inline ModelKind parse_model_kind(std::string_view name) {
  const auto folded = detail::fold_relation_name(name);
  for (std::size_t i = 0; i < kModelKindNames.size(); ++i)
    if (detail::fold_relation_name(kModelKindNames[i]) == folded) return static_cast<ModelKind>(i);
  throw ParseError("unknown model kind '" + std::string(name) + "'");
}

inline bool uses_graph(ModelKind k) { return k == ModelKind::GCN || k == ModelKind::RGCN || k == ModelKind::MixHop; }

struct ModelConfig {
  ModelKind kind = ModelKind::RGCN;
  int n_layers = 3;
  int hidden_dim = 128;
  std::vector<int> hop_set{0, 1, 2};  // MixHop only
  int input_dim = 0;

  bool operator==(const ModelConfig&) const = default;
};

inline void check_config(const ModelConfig& c) {
  if (c.n_layers < 1) throw ContractError("ModelConfig: n_layers must be >= 1");
  if (c.hidden_dim < 1) throw ContractError("ModelConfig: hidden_dim must be >= 1");
  if (c.input_dim < 1) throw ContractError("ModelConfig: input_dim must be >= 1");
  if (c.kind == ModelKind::MixHop) {
    if (c.hop_set.empty()) throw ContractError("ModelConfig: hop_set must be non-empty");
    for (std::size_t i = 0; i < c.hop_set.size(); ++i) {
      if (c.hop_set[i] < 0) throw ContractError("ModelConfig: hop powers must be non-negative");
      if (i > 0 && c.hop_set[i] <= c.hop_set[i - 1]) throw ContractError("ModelConfig: hop_set must be sorted and unique");
    }
  }
}

inline nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"kind", std::string(model_kind_name(c.kind))},
          {"n_layers", c.n_layers},
          {"hidden_dim", c.hidden_dim},
          {"hop_set", c.hop_set},
          {"input_dim", c.input_dim}};
}

/// Missing keys keep their defaults.
inline ModelConfig config_from_json(const nlohmann::json& j, ModelConfig c = {}) {
  try {
    if (j.contains("kind")) c.kind = parse_model_kind(j.at("kind").get<std::string>());
    if (j.contains("n_layers")) c.n_layers = j.at("n_layers").get<int>();
    if (j.contains("hidden_dim")) c.hidden_dim = j.at("hidden_dim").get<int>();
    if (j.contains("hop_set")) c.hop_set = j.at("hop_set").get<std::vector<int>>();
    if (j.contains("input_dim")) c.input_dim = j.at("input_dim").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad model config: ") + e.what());
  }
  return c;
}

// ---------------------------------------------------------------------------
// Effective relations for the relational model: each of the 18 relation types in
// forward and inverse direction, plus one self-loop.

inline constexpr std::size_t kNumEffectiveRelations = 2 * kNumRelations + 1;
inline constexpr std::size_t kSelfLoopRelation = 2 * kNumRelations;

constexpr std::size_t forward_relation_id(RelationType r) { return 2 * relation_index(r); }
constexpr std::size_t inverse_relation_id(RelationType r) { return 2 * relation_index(r) + 1; }

inline std::string effective_relation_name(std::size_t id) {
  if (id == kSelfLoopRelation) return "SelfLoop";
  return std::string(relation_name(relation_from_index(id / 2))) + (id % 2 == 0 ? ".fwd" : ".inv");
}

// ---------------------------------------------------------------------------
// Parameters

struct Parameter {
  std::string name;
  ad::Matrix value;
};

/// Ordered, named parameter matrices.
class ParameterSet {
 public:
  std::size_t add(std::string name, Eigen::Index rows, Eigen::Index cols) {
    if (index_.contains(name)) throw ContractError("duplicate parameter " + name);
    index_.emplace(name, params_.size());
    params_.push_back({std::move(name), ad::Matrix::Zero(rows, cols)});
    return params_.size() - 1;
  }

  std::size_t size() const noexcept { return params_.size(); }
  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }

  std::size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("no parameter named " + name);
    return it->second;
  }
  ad::Matrix& at(const std::string& name) { return params_[index_of(name)].value; }
  const ad::Matrix& at(const std::string& name) const { return params_[index_of(name)].value; }

  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
    return n;
  }

 private:
  std::vector<Parameter> params_;
  std::map<std::string, std::size_t> index_;
};

/// Width of each conv/dense layer output; the head consumes the last entry.
inline std::vector<int> layer_output_widths(const ModelConfig& c) {
  std::vector<int> out;
  if (c.kind == ModelKind::LogReg) return out;
  const int width = c.kind == ModelKind::MixHop ? c.hidden_dim * static_cast<int>(c.hop_set.size()) : c.hidden_dim;
  out.assign(static_cast<std::size_t>(c.n_layers), width);
  return out;
}

inline int head_input_dim(const ModelConfig& c) {
  const auto w = layer_output_widths(c);
  return w.empty() ? c.input_dim : w.back();
}

struct ParameterShape {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
};

/// Names and shapes of every parameter of a config, in storage order.
inline std::vector<ParameterShape> parameter_layout(const ModelConfig& c) {
  check_config(c);
  std::vector<ParameterShape> out;
  int d_in = c.input_dim;
  const auto widths = layer_output_widths(c);
  for (int l = 0; l < static_cast<int>(widths.size()); ++l) {
    const auto prefix = "layer" + std::to_string(l) + ".";
    switch (c.kind) {
      case ModelKind::MLP:
        out.push_back({prefix + "weight", d_in, c.hidden_dim});
        out.push_back({prefix + "bias", 1, c.hidden_dim});
        break;
      case ModelKind::GCN:
        out.push_back({prefix + "weight", d_in, c.hidden_dim});
        break;
      case ModelKind::RGCN:
        for (std::size_t r = 0; r < kNumEffectiveRelations; ++r)
          out.push_back({prefix + effective_relation_name(r), d_in, c.hidden_dim});
        break;
      case ModelKind::MixHop:
        for (int p : c.hop_set) out.push_back({prefix + "hop" + std::to_string(p), d_in, c.hidden_dim});
        break;
      case ModelKind::LogReg:
        break;
    }
    d_in = widths[static_cast<std::size_t>(l)];
  }
  out.push_back({"head.weight", d_in, 1});
  out.push_back({"head.bias", 1, 1});
  return out;
}

/// Parameter layout for a config (all zeros).
inline ParameterSet make_parameters(const ModelConfig& c) {
  ParameterSet ps;
  for (const auto& s : parameter_layout(c)) ps.add(s.name, s.rows, s.cols);
  return ps;
}

/// Throws ContractError unless `ps` has exactly the layout of `c`.
inline void check_parameters(const ModelConfig& c, const ParameterSet& ps) {
  const auto layout = parameter_layout(c);
  if (layout.size() != ps.size())
    throw ContractError("parameters: " + std::to_string(ps.size()) + " tensors, config needs " +
                        std::to_string(layout.size()));
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& want = layout[i];
    const auto& have = ps[i];
    if (have.name != want.name || have.value.rows() != want.rows || have.value.cols() != want.cols)
      throw ContractError("parameters: tensor " + std::to_string(i) + " is " + have.name + " " +
                          std::to_string(have.value.rows()) + "x" + std::to_string(have.value.cols()) +
                          ", config needs " + want.name + " " + std::to_string(want.rows) + "x" +
                          std::to_string(want.cols));
  }
}

/// Seeded Glorot-uniform init for weight matrices (±sqrt(6 / (fan_in + fan_out))); biases zero.
inline ParameterSet init_parameters(const ModelConfig& c, std::uint64_t seed) {
  auto ps = make_parameters(c);
  std::mt19937_64 rng(seed);
  for (auto& p : ps) {
    if (p.name.ends_with("bias")) continue;
    const double limit = std::sqrt(6.0 / static_cast<double>(p.value.rows() + p.value.cols()));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value(i) = dist(rng);
  }
  return ps;
}

// ---------------------------------------------------------------------------
// Graph operators (precomputed once per graph)

struct GraphOperators {
  int n_nodes = 0;
  /// Relational model: (effective relation id, row-normalized neighbour matrix) for each
  /// non-empty relation neighbourhood. Row i averages over N_i^r.
  std::vector<std::pair<std::size_t, ad::SparseHandle>> relations;
  /// GCN/MixHop: D^-1/2 (A + I) D^-1/2 over the undirected simplification.
  ad::SparseHandle norm_adj;
};

namespace detail {

inline ad::SparseHandle row_mean_matrix(int n, const std::vector<std::set<int>>& nbrs) {
  std::vector<Eigen::Triplet<double>> trip;
  for (int i = 0; i < n; ++i) {
    const auto& s = nbrs[static_cast<std::size_t>(i)];
    if (s.empty()) continue;
    const double w = 1.0 / static_cast<double>(s.size());
    for (int j : s) trip.emplace_back(i, j, w);
  }
  auto m = std::make_shared<ad::SparseMatrix>(n, n);
  m->setFromTriplets(trip.begin(), trip.end());
  return m;
}

}  // namespace detail

/// Relation neighbourhoods: node i's forward-r neighbours are the sources j of edges
/// j -> i labelled r; inverse-r neighbours are targets j of edges i -> j labelled r.
inline std::vector<std::pair<std::size_t, ad::SparseHandle>> relation_operators(const DiscourseGraph& g) {
  const auto n = static_cast<std::size_t>(g.n_nodes);
  std::map<std::size_t, std::vector<std::set<int>>> nbrs;
  for (const auto& e : g.edges) {
    auto& fwd = nbrs[forward_relation_id(e.relation)];
    auto& inv = nbrs[inverse_relation_id(e.relation)];
    if (fwd.empty()) fwd.resize(n);
    if (inv.empty()) inv.resize(n);
    fwd[static_cast<std::size_t>(e.dst)].insert(e.src);
    inv[static_cast<std::size_t>(e.src)].insert(e.dst);
  }
  std::vector<std::pair<std::size_t, ad::SparseHandle>> out;
  for (const auto& [id, sets] : nbrs) out.emplace_back(id, detail::row_mean_matrix(g.n_nodes, sets));
  return out;
}

/// Dense symmetric-normalized adjacency with self-loops; reference for tests and stats.
inline ad::Matrix normalized_adjacency_dense(const DiscourseGraph& g) {
  const auto nbrs = undirected_neighbors(g);
  const Eigen::Index n = g.n_nodes;
  ad::Matrix a = ad::Matrix::Identity(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int j : nbrs[static_cast<std::size_t>(i)]) a(i, j) = 1.0;
  const Eigen::VectorXd dinv = a.rowwise().sum().cwiseSqrt().cwiseInverse();
  return dinv.asDiagonal() * a * dinv.asDiagonal();
}

inline ad::SparseHandle normalized_adjacency(const DiscourseGraph& g) {
  const auto nbrs = undirected_neighbors(g);
  const auto n = static_cast<std::size_t>(g.n_nodes);
  std::vector<double> dinv(n);
  for (std::size_t i = 0; i < n; ++i) dinv[i] = 1.0 / std::sqrt(static_cast<double>(nbrs[i].size() + 1));
  std::vector<Eigen::Triplet<double>> trip;
  for (std::size_t i = 0; i < n; ++i) {
    trip.emplace_back(static_cast<int>(i), static_cast<int>(i), dinv[i] * dinv[i]);
    for (int j : nbrs[i]) trip.emplace_back(static_cast<int>(i), j, dinv[i] * dinv[static_cast<std::size_t>(j)]);
  }
  auto m = std::make_shared<ad::SparseMatrix>(g.n_nodes, g.n_nodes);
  m->setFromTriplets(trip.begin(), trip.end());
  return m;
}

inline GraphOperators build_operators(const DiscourseGraph& g, ModelKind kind) {
  check_graph(g, /*reject_duplicates=*/false);
  GraphOperators ops;
  ops.n_nodes = g.n_nodes;
  if (kind == ModelKind::RGCN) ops.relations = relation_operators(g);
  if (kind == ModelKind::GCN || kind == ModelKind::MixHop) ops.norm_adj = normalized_adjacency(g);
  return ops;
}

// ---------------------------------------------------------------------------
// Layers

/// Tensors bound to a tape, aligned with a ParameterSet.
struct BoundParameters {
  const ParameterSet* params = nullptr;
  std::vector<ad::Tensor> tensors;

  const ad::Tensor& operator[](const std::string& name) const { return tensors[params->index_of(name)]; }
};

inline BoundParameters bind_parameters(ad::Tape& tape, const ParameterSet& ps, bool requires_grad) {
  BoundParameters b;
  b.params = &ps;
  b.tensors.reserve(ps.size());
  for (const auto& p : ps) b.tensors.push_back(tape.leaf(p.value, requires_grad));
  return b;
}

/// One relational layer: ReLU( W_self h_i + sum_r mean_{j in N_i^r} W_r h_j ).
/// `weights[r]` is the matrix of effective relation r (size kNumEffectiveRelations).
inline ad::Tensor rgcn_layer_forward(const ad::Tensor& h, const GraphOperators& ops,
                                     std::span<const ad::Tensor> weights, bool activate = true) {
  if (weights.size() != kNumEffectiveRelations) throw ContractError("rgcn layer: wrong number of relation weights");
  if (h.rows() != ops.n_nodes)
    throw ShapeError("rgcn layer: " + std::to_string(h.rows()) + " feature rows for " +
                     std::to_string(ops.n_nodes) + " nodes");
  std::vector<ad::Tensor> terms;
  terms.reserve(ops.relations.size() + 1);
  terms.push_back(ad::matmul(h, weights[kSelfLoopRelation]));
  for (const auto& [rel, adj] : ops.relations) terms.push_back(ad::matmul(ad::spmm(adj, h), weights[rel]));
  auto z = terms.size() == 1 ? terms.front() : ad::add_n(terms);
  return activate ? ad::relu(z) : z;
}

/// Â h W, ReLU unless `activate` is false.
inline ad::Tensor gcn_layer_forward(const ad::Tensor& h, const GraphOperators& ops, const ad::Tensor& weight,
                                    bool activate = true) {
  if (!ops.norm_adj) throw ContractError("gcn layer: operators lack a normalized adjacency");
  if (h.rows() != ops.n_nodes) throw ShapeError("gcn layer: feature rows do not match node count");
  auto z = ad::spmm(ops.norm_adj, ad::matmul(h, weight));
  return activate ? ad::relu(z) : z;
}

/// Column concatenation over hop powers p of Â^p h W_p, ReLU unless `activate` is false.
inline ad::Tensor mixhop_layer_forward(const ad::Tensor& h, const GraphOperators& ops,
                                       std::span<const ad::Tensor> weights, std::span<const int> hop_set,
                                       bool activate = true) {
  if (!ops.norm_adj) throw ContractError("mixhop layer: operators lack a normalized adjacency");
  if (weights.size() != hop_set.size()) throw ContractError("mixhop layer: one weight per hop required");
  if (h.rows() != ops.n_nodes) throw ShapeError("mixhop layer: feature rows do not match node count");
  std::vector<ad::Tensor> parts;
  ad::Tensor propagated = h;
  int power = 0;
  for (std::size_t k = 0; k < hop_set.size(); ++k) {
    while (power < hop_set[k]) {
      propagated = ad::spmm(ops.norm_adj, propagated);
      ++power;
    }
    parts.push_back(ad::matmul(propagated, weights[k]));
  }
  auto z = parts.size() == 1 ? parts.front() : ad::concat_cols(parts);
  return activate ? ad::relu(z) : z;
}

/// Last hidden representation (or h0 for LogReg).
inline ad::Tensor model_hidden(const ModelConfig& c, const BoundParameters& p, const ad::Tensor& h0,
                               const GraphOperators* ops) {
  check_config(c);
  if (h0.cols() != c.input_dim)
    throw ContractError("model: input has " + std::to_string(h0.cols()) + " columns, config expects " +
                        std::to_string(c.input_dim));
  if (p.tensors.size() != p.params->size()) throw ContractError("model: unbound parameters");
  check_parameters(c, *p.params);
  if (uses_graph(c.kind)) {
    if (!ops) throw ContractError("model: graph model requires graph operators");
    if (ops->n_nodes != h0.rows()) throw ContractError("model: graph node count differs from embedding rows");
  }
  ad::Tensor h = h0;
  for (int l = 0; l < (c.kind == ModelKind::LogReg ? 0 : c.n_layers); ++l) {
    const auto prefix = "layer" + std::to_string(l) + ".";
    const bool last = l + 1 == c.n_layers;
    switch (c.kind) {
      case ModelKind::MLP:
        h = ad::relu(ad::add_row_bias(ad::matmul(h, p[prefix + "weight"]), p[prefix + "bias"]));
        break;
      case ModelKind::GCN:
        h = gcn_layer_forward(h, *ops, p[prefix + "weight"], !last);
        break;
      case ModelKind::RGCN: {
        std::vector<ad::Tensor> ws;
        ws.reserve(kNumEffectiveRelations);
        for (std::size_t r = 0; r < kNumEffectiveRelations; ++r) ws.push_back(p[prefix + effective_relation_name(r)]);
        h = rgcn_layer_forward(h, *ops, ws, true);
        break;
      }
      case ModelKind::MixHop: {
        std::vector<ad::Tensor> ws;
        for (int hop : c.hop_set) ws.push_back(p[prefix + "hop" + std::to_string(hop)]);
        h = mixhop_layer_forward(h, *ops, ws, c.hop_set, !last);
        break;
      }
      case ModelKind::LogReg:
        break;
    }
  }
  return h;
}

/// Per-node inclusion probabilities, N x 1.
inline ad::Tensor model_forward(const ModelConfig& c, const BoundParameters& p, const ad::Tensor& h0,
                                const GraphOperators* ops) {
  auto h = model_hidden(c, p, h0, ops);
  return ad::sigmoid(ad::add_row_bias(ad::matmul(h, p["head.weight"]), p["head.bias"]));
}

inline ad::Matrix to_matrix(const EmbeddingMatrix& e) {
  ad::Matrix m(static_cast<Eigen::Index>(e.n_rows), static_cast<Eigen::Index>(e.dim));
  for (std::size_t r = 0; r < e.n_rows; ++r)
    for (std::size_t c = 0; c < e.dim; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = e.at(r, c);
  return m;
}

/// Inference without gradient tracking.
inline std::vector<double> predict(const ModelConfig& c, const ParameterSet& ps, const ad::Matrix& h0,
                                   const GraphOperators* ops) {
  ad::Tape tape;
  auto bound = bind_parameters(tape, ps, false);
  auto scores = model_forward(c, bound, tape.constant(h0), ops);
  const auto& v = scores.value();
  return {v.data(), v.data() + v.size()};
}

// ---------------------------------------------------------------------------
// Checkpoints: manifest.json (config, seed, relation ordering, tensor table) plus
// params.bin holding one DEMB record per tensor in manifest order.

struct Checkpoint {
  ModelConfig config;
  ParameterSet params;
  std::uint64_t seed = 0;
};

inline void save_checkpoint(const std::filesystem::path& dir, const ModelConfig& c, const ParameterSet& ps,
                            std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  nlohmann::json tensors = nlohmann::json::array();
  {
    std::ofstream bin(dir / "params.bin", std::ios::binary);
    if (!bin) throw Error("cannot write " + (dir / "params.bin").string());
    for (const auto& p : ps) {
      std::vector<float> row_major;
      row_major.reserve(static_cast<std::size_t>(p.value.size()));
      for (Eigen::Index r = 0; r < p.value.rows(); ++r)
        for (Eigen::Index k = 0; k < p.value.cols(); ++k) row_major.push_back(static_cast<float>(p.value(r, k)));
      demb::write_record(bin, static_cast<std::uint32_t>(p.value.rows()), static_cast<std::uint32_t>(p.value.cols()),
                         row_major);
      tensors.push_back({{"name", p.name}, {"shape", {p.value.rows(), p.value.cols()}}});
    }
  }
  nlohmann::json relations = nlohmann::json::array();
  for (std::size_t r = 0; r < kNumEffectiveRelations; ++r)
    relations.push_back({{"id", r}, {"name", effective_relation_name(r)}});
  nlohmann::json manifest{{"format", "dgsum-checkpoint"},
                          {"version", 1},
                          {"model", config_to_json(c)},
                          {"seed", seed},
                          {"relations", c.kind == ModelKind::RGCN ? relations : nlohmann::json::array()},
                          {"tensors", tensors}};
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  out << manifest.dump(2) << '\n';
}

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const auto manifest = read_json_file(dir / "manifest.json");
  Checkpoint ck;
  try {
    ck.config = config_from_json(manifest.at("model"));
    ck.seed = manifest.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad checkpoint manifest: ") + e.what());
  }
  ck.params = make_parameters(ck.config);
  const auto& tensors = manifest.at("tensors");
  if (tensors.size() != ck.params.size()) throw ContractError("checkpoint: tensor count does not match config");
  std::ifstream bin(dir / "params.bin", std::ios::binary);
  if (!bin) throw ParseError("cannot open " + (dir / "params.bin").string());
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto& p = ck.params[i];
    if (tensors[i].at("name").get<std::string>() != p.name)
      throw ContractError("checkpoint: tensor " + std::to_string(i) + " is not " + p.name);
    const auto h = demb::read_header(bin);
    if (h.n_rows != p.value.rows() || h.dim != p.value.cols())
      throw ShapeError("checkpoint: shape mismatch for " + p.name);
    const auto vals = demb::read_values(bin, std::size_t{h.n_rows} * h.dim);
    for (Eigen::Index r = 0; r < p.value.rows(); ++r)
      for (Eigen::Index k = 0; k < p.value.cols(); ++k)
        p.value(r, k) = vals[static_cast<std::size_t>(r * p.value.cols() + k)];
  }
  return ck;
}

}  // namespace dgsum
