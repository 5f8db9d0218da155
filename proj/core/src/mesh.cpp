#include "igabem/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

#include "igabem/errors.hpp"

namespace igabem {

void KnotMesh::cache_arclengths() {
  arclen_.resize(num_elements());
  for (int e = 0; e < num_elements(); ++e)
    arclen_[e] = curve_->arclength(nodes_[e], nodes_[e + 1]);
}

KnotMesh KnotMesh::initial(std::shared_ptr<const ParamCurve> curve, int p, int n0,
                           std::vector<double> initial_weights) {
  if (p < 0) throw ConfigurationError("KnotMesh: degree >= 0 required");
  if (n0 < 2) throw ConfigurationError("KnotMesh: at least 2 initial elements required");

  KnotMesh mesh;
  mesh.curve_ = std::move(curve);
  mesh.p_ = p;

  // nodes at all geometry breakpoints, each smooth piece subdivided uniformly
  const double a = mesh.curve_->param_begin(), b = mesh.curve_->param_end();
  std::vector<double> cuts{a};
  for (double t : mesh.curve_->smooth_breaks()) cuts.push_back(t);
  cuts.push_back(b);

  const double total = b - a;
  mesh.nodes_.push_back(a);
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double len = cuts[i + 1] - cuts[i];
    const int k = std::max(1, static_cast<int>(std::lround(n0 * len / total)));
    for (int j = 1; j <= k; ++j) mesh.nodes_.push_back(cuts[i] + len * j / k);
  }
  if (static_cast<int>(mesh.nodes_.size()) < 3)
    throw ConfigurationError("KnotMesh: initial mesh needs at least 2 elements");

  mesh.mults_.assign(mesh.nodes_.size(), 1);
  mesh.mults_.front() = p + 1;
  mesh.mults_.back() = p + 1;

  const int dim = mesh.knot_count() - (mesh.closed() ? 0 : p + 1);
  if (initial_weights.empty()) {
    mesh.weights_.assign(dim, 1.0);
  } else {
    if (static_cast<int>(initial_weights.size()) != dim)
      throw ConfigurationError("KnotMesh: initial weights must match the space dimension");
    mesh.weights_ = std::move(initial_weights);
  }

  mesh.kappa0_ = 1.0; // provisional; mesh_ratio needs nodes_ in place
  mesh.kappa0_ = mesh.mesh_ratio();

  auto anc = std::make_shared<Ancestry>();
  anc->nodes = mesh.nodes_;
  anc->mults = mesh.mults_;
  anc->p = p;
  anc->knot_count = mesh.knot_count();
  anc->weights = mesh.weights_;
  mesh.ancestry_ = std::move(anc);

  mesh.cache_arclengths();
  return mesh;
}

std::vector<int> KnotMesh::owned_nodes() const {
  std::vector<int> ids;
  const int n = num_nodes() - 1;
  for (int j = closed() ? 1 : 0; j <= n; ++j) ids.push_back(j);
  return ids;
}

int KnotMesh::knot_count() const {
  int count = 0;
  const int n = num_nodes() - 1;
  for (int j = closed() ? 1 : 0; j <= n; ++j) count += mults_[j];
  return count;
}

int KnotMesh::canonical_node(int j) const {
  if (closed() && j == 0) return num_nodes() - 1;
  return j;
}

double KnotMesh::mesh_ratio() const {
  const int E = num_elements();
  if (E < 2) return 1.0;
  double kappa = 1.0;
  const int last = closed() ? E : E - 1;
  for (int e = 0; e < last; ++e) {
    const int f = (e + 1) % E;
    const double r = element_length(e) / element_length(f);
    kappa = std::max(kappa, std::max(r, 1.0 / r));
  }
  return kappa;
}

std::vector<int> KnotMesh::element_neighbors(int e) const {
  const int E = num_elements();
  std::vector<int> nb;
  if (closed()) {
    if (E > 1) {
      nb.push_back((e + E - 1) % E);
      nb.push_back((e + 1) % E);
    }
  } else {
    if (e > 0) nb.push_back(e - 1);
    if (e + 1 < E) nb.push_back(e + 1);
  }
  return nb;
}

std::vector<int> KnotMesh::patch_of_elements(std::span<const int> seed_elements, int m) const {
  std::set<int> cur(seed_elements.begin(), seed_elements.end());
  for (int el : cur)
    if (el < 0 || el >= num_elements()) throw std::domain_error("patch: element id out of range");
  for (int step = 0; step < m; ++step) {
    std::set<int> next = cur;
    for (int e : cur)
      for (int nb : element_neighbors(e)) next.insert(nb);
    cur.swap(next);
  }
  return {cur.begin(), cur.end()};
}

std::vector<int> KnotMesh::patch_of_nodes(std::span<const int> seed_nodes, int m) const {
  if (m == 0) return {};
  std::set<int> elems;
  const int E = num_elements();
  for (int j : seed_nodes) {
    if (j < 0 || j >= num_nodes()) throw std::domain_error("patch: node id out of range");
    const int jc = canonical_node(j);
    if (closed()) {
      elems.insert((jc + E - 1) % E);
      elems.insert(jc % E);
    } else {
      if (jc > 0) elems.insert(jc - 1);
      if (jc < E) elems.insert(jc);
    }
  }
  std::vector<int> seed(elems.begin(), elems.end());
  return patch_of_elements(seed, m - 1);
}

KnotVector KnotMesh::knot_vector() const {
  std::vector<double> knots;
  const int n = num_nodes() - 1;
  for (int k = 0; k < p_ + 1; ++k) knots.push_back(nodes_.front());
  for (int j = 1; j < n; ++j)
    for (int k = 0; k < mults_[j]; ++k) knots.push_back(nodes_[j]);
  for (int k = 0; k < p_ + 1; ++k) knots.push_back(nodes_.back());
  return KnotVector(p_, std::move(knots), closed());
}

NurbsSpace KnotMesh::space() const { return NurbsSpace(knot_vector(), weights_); }

int KnotMesh::dimension() const { return static_cast<int>(weights_.size()); }

RefineResult KnotMesh::refine(const MarkSet& marked, std::span<const double> coeffs) const {
  const int n = num_nodes() - 1;
  const int E = num_elements();

  std::vector<char> is_marked(num_nodes(), 0);
  for (int j : marked.nodes) {
    if (j < 0 || j >= num_nodes()) throw std::domain_error("refine: marked node out of range");
    is_marked[canonical_node(j)] = 1;
    if (closed() && canonical_node(j) == n) is_marked[0] = 1;
  }

  // (i) both endpoints marked -> bisect
  std::vector<char> queued(E, 0);
  for (int e = 0; e < E; ++e)
    if (is_marked[e] && is_marked[e + 1]) queued[e] = 1;

  std::vector<char> covered(num_nodes(), 0);
  for (int e = 0; e < E; ++e)
    if (queued[e]) covered[e] = covered[e + 1] = 1;
  if (closed()) {
    if (covered[0]) covered[n] = 1;
    if (covered[n]) covered[0] = 1;
  }

  // (ii) remaining marked nodes: multiplicity steering
  std::vector<char> increase(num_nodes(), 0);
  for (int j = closed() ? 1 : 0; j <= n; ++j) {
    if (!is_marked[j] || covered[j]) continue;
    if (mults_[j] < p_ + 1) {
      increase[j] = 1;
    } else {
      const int jc = canonical_node(j);
      if (closed()) {
        queued[(jc + E - 1) % E] = 1;
        queued[jc % E] = 1;
      } else {
        if (jc > 0) queued[jc - 1] = 1;
        if (jc < E) queued[jc] = 1;
      }
    }
  }

  // (iii) closure: neighbors that are too long relative to a queued element
  bool changed = true;
  while (changed) {
    changed = false;
    for (int e = 0; e < E; ++e) {
      if (!queued[e]) continue;
      for (int nb : element_neighbors(e)) {
        if (!queued[nb] && element_length(nb) > kappa0_ * element_length(e)) {
          queued[nb] = 1;
          changed = true;
        }
      }
    }
  }

  // (iv) build the refined mesh
  RefineTrace trace;

  KnotMesh next;
  next.curve_ = curve_;
  next.p_ = p_;
  next.kappa0_ = kappa0_;
  next.ancestry_ = ancestry_;

  std::vector<int> parent_of_new;
  for (int e = 0; e < E; ++e) {
    next.nodes_.push_back(nodes_[e]);
    next.mults_.push_back(mults_[e] + (increase[e] ? 1 : 0));
    parent_of_new.push_back(e);
    if (queued[e]) {
      const double mid = 0.5 * (nodes_[e] + nodes_[e + 1]);
      // children below ~1e-13 would push quadrature points onto coinciding
      // doubles; stop before the kernel evaluations degenerate
      const double hmin = 1e-13 * (1.0 + std::abs(nodes_[e]) + std::abs(nodes_[e + 1]));
      if (!(nodes_[e] < mid && mid < nodes_[e + 1]) || element_length(e) < 2.0 * hmin)
        throw RefinementError("refine: parameter resolution exhausted (element too small "
                              "to bisect in double precision)");
      next.nodes_.push_back(mid);
      next.mults_.push_back(1);
      parent_of_new.push_back(e);
      trace.bisected_elements.push_back(e);
      trace.inserted_knots.push_back(next.nodes_.back());
    }
  }
  next.nodes_.push_back(nodes_[n]);
  next.mults_.push_back(mults_[n] + (increase[n] ? 1 : 0));

  for (int j = closed() ? 1 : 0; j <= n; ++j)
    if (increase[j]) {
      trace.mult_increased_nodes.push_back(j);
      trace.inserted_knots.push_back(nodes_[j]);
    }
  std::sort(trace.inserted_knots.begin(), trace.inserted_knots.end());

  // [T_star] \ [T_plus]: bisected elements plus elements whose endpoint
  // multiplicity changed (the tagged element differs either way)
  {
    std::set<int> gone(trace.bisected_elements.begin(), trace.bisected_elements.end());
    for (int j : trace.mult_increased_nodes) {
      const int jc = canonical_node(j);
      if (closed()) {
        gone.insert((jc + E - 1) % E);
        gone.insert(jc % E);
      } else {
        if (jc > 0) gone.insert(jc - 1);
        if (jc < E) gone.insert(jc);
      }
    }
    trace.changed_old_elements.assign(gone.begin(), gone.end());
  }

  trace.parent_of_element = parent_of_new;
  for (int e = 0; e < static_cast<int>(parent_of_new.size()); ++e) {
    const int par = parent_of_new[e];
    const bool was_bisected =
        std::binary_search(trace.bisected_elements.begin(), trace.bisected_elements.end(), par);
    const bool mult_changed =
        std::binary_search(trace.changed_old_elements.begin(), trace.changed_old_elements.end(), par);
    if (was_bisected || mult_changed) trace.new_elements.push_back(e);
  }

  // transport weights (and coefficients) through the same insertions
  std::vector<double> transported;
  {
    NurbsSpace sp = space();
    std::vector<double> c(coeffs.begin(), coeffs.end());
    const bool have_coeffs = !c.empty();
    if (have_coeffs && static_cast<int>(c.size()) != dimension())
      throw ConfigurationError("refine: coefficient count mismatch");
    if (!have_coeffs) c.assign(dimension(), 0.0);
    for (double u : trace.inserted_knots) {
      InsertResult ins = knot_insert(sp, c, u);
      sp = std::move(ins.space);
      c = std::move(ins.coeffs);
    }
    next.weights_ = sp.weights();
    if (have_coeffs) transported = std::move(c);
  }

  next.cache_arclengths();
  return RefineResult{std::move(next), std::move(transported), std::move(trace)};
}

bool KnotMesh::same_ancestry(const KnotMesh& other) const {
  if (ancestry_ == other.ancestry_) return true;
  if (!ancestry_ || !other.ancestry_) return false;
  return ancestry_->p == other.ancestry_->p && ancestry_->nodes == other.ancestry_->nodes &&
         ancestry_->mults == other.ancestry_->mults &&
         ancestry_->weights == other.ancestry_->weights;
}

bool KnotMesh::is_refinement_of(const KnotMesh& coarse) const {
  if (!same_ancestry(coarse)) return false;
  std::size_t i = 0;
  for (std::size_t j = 0; j < coarse.nodes_.size(); ++j) {
    while (i < nodes_.size() && nodes_[i] != coarse.nodes_[j]) ++i;
    if (i == nodes_.size()) return false;
    if (mults_[i] < coarse.mults_[j]) return false;
    ++i;
  }
  return true;
}

KnotMesh overlay(const KnotMesh& a, const KnotMesh& b) {
  if (!a.same_ancestry(b))
    throw std::domain_error("overlay: meshes do not descend from the same initial mesh");

  KnotMesh out;
  out.curve_ = a.curve_;
  out.p_ = a.p_;
  out.kappa0_ = a.kappa0_;
  out.ancestry_ = a.ancestry_;

  // union of nodes, maximal multiplicity (0 when absent in one mesh)
  std::size_t i = 0, j = 0;
  while (i < a.nodes_.size() || j < b.nodes_.size()) {
    double za = i < a.nodes_.size() ? a.nodes_[i] : std::numeric_limits<double>::infinity();
    double zb = j < b.nodes_.size() ? b.nodes_[j] : std::numeric_limits<double>::infinity();
    if (za < zb) {
      out.nodes_.push_back(za);
      out.mults_.push_back(a.mults_[i]);
      ++i;
    } else if (zb < za) {
      out.nodes_.push_back(zb);
      out.mults_.push_back(b.mults_[j]);
      ++j;
    } else {
      out.nodes_.push_back(za);
      out.mults_.push_back(std::max(a.mults_[i], b.mults_[j]));
      ++i;
      ++j;
    }
  }

  // weights by insertion from the initial mesh to the overlay knots
  {
    const auto& anc = *a.ancestry_;
    KnotMesh init;
    init.curve_ = a.curve_;
    init.p_ = a.p_;
    init.nodes_ = anc.nodes;
    init.mults_ = anc.mults;
    init.weights_ = anc.weights;
    init.kappa0_ = a.kappa0_;
    init.ancestry_ = a.ancestry_;

    std::vector<double> to_insert;
    {
      // multiset difference of interior knots
      std::size_t k = 0;
      const int n_out = out.num_nodes() - 1;
      for (int jj = 1; jj < n_out; ++jj) {
        int old_mult = 0;
        while (k < anc.nodes.size() && anc.nodes[k] < out.nodes_[jj]) ++k;
        if (k < anc.nodes.size() && anc.nodes[k] == out.nodes_[jj]) old_mult = anc.mults[k];
        for (int r = old_mult; r < out.mults_[jj]; ++r) to_insert.push_back(out.nodes_[jj]);
      }
    }
    NurbsSpace sp = init.space();
    std::vector<double> dummy(init.dimension(), 0.0);
    for (double u : to_insert) {
      InsertResult ins = knot_insert(sp, dummy, u);
      sp = std::move(ins.space);
      dummy = std::move(ins.coeffs);
    }
    out.weights_ = sp.weights();
  }

  out.cache_arclengths();
  return out;
}

std::vector<double> tilde_h(const KnotMesh& mesh, double q1) {
  if (!(q1 > 0.0 && q1 < 1.0)) throw ConfigurationError("tilde_h: q1 in (0,1) required");
  const int E = mesh.num_elements();
  std::vector<double> h(E);
  for (int e = 0; e < E; ++e) {
    const int seed[1] = {e};
    const auto patch = mesh.patch_of_elements(seed, 1);
    double len = 0.0;
    std::set<int> nodes;
    for (int f : patch) {
      len += mesh.element_length(f);
      auto [z1, z2] = mesh.element_node_ids(f);
      nodes.insert(mesh.closed() && z1 == 0 ? mesh.num_nodes() - 1 : z1);
      nodes.insert(mesh.closed() && z2 == 0 ? mesh.num_nodes() - 1 : z2);
    }
    int mult_sum = 0;
    for (int z : nodes) mult_sum += mesh.multiplicity(z);
    h[e] = len * std::pow(q1, mult_sum);
  }
  return h;
}

std::vector<double> transport_coeffs(const KnotMesh& coarse, const KnotMesh& fine,
                                     std::span<const double> coeffs) {
  if (!fine.is_refinement_of(coarse))
    throw std::domain_error("transport_coeffs: target is not a refinement");
  // multiset difference of node multiplicities
  std::vector<double> to_insert;
  {
    const auto& zn = fine.node_params();
    std::size_t k = 0;
    for (std::size_t j = 1; j + 1 < zn.size(); ++j) {
      int old_mult = 0;
      while (k < coarse.node_params().size() && coarse.node_params()[k] < zn[j]) ++k;
      if (k < coarse.node_params().size() && coarse.node_params()[k] == zn[j])
        old_mult = coarse.multiplicity(static_cast<int>(k));
      for (int r = old_mult; r < fine.multiplicity(static_cast<int>(j)); ++r)
        to_insert.push_back(zn[j]);
    }
  }
  NurbsSpace sp = coarse.space();
  std::vector<double> c(coeffs.begin(), coeffs.end());
  for (double u : to_insert) {
    InsertResult ins = knot_insert(sp, c, u);
    sp = std::move(ins.space);
    c = std::move(ins.coeffs);
  }
  return c;
}

std::optional<double> measure_patch_shrink(const KnotMesh& coarse, const KnotMesh& fine,
                                           const RefineTrace& trace) {
  if (trace.bisected_elements.empty()) return std::nullopt;

  auto patch_len = [](const KnotMesh& m, int e) {
    const int seed[1] = {e};
    double len = 0.0;
    for (int f : m.patch_of_elements(seed, 1)) len += m.element_length(f);
    return len;
  };

  // region omega_+(new elements): every new-mesh element there has a father in
  // the coarse mesh; record the ratios where the patch length actually changed
  const auto region = fine.patch_of_elements(trace.new_elements, 1);
  double q2 = 0.0;
  bool any = false;
  for (int e : region) {
    const double lp = patch_len(fine, e);
    const double lc = patch_len(coarse, trace.parent_of_element[e]);
    if (lp < lc * (1.0 - 1e-12)) {
      q2 = std::max(q2, lp / lc);
      any = true;
    }
  }
  if (!any) return std::nullopt;
  return q2;
}

} // namespace igabem
