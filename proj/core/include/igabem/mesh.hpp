#ifndef IGABEM_MESH_HPP
#define IGABEM_MESH_HPP

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "igabem/geometry.hpp"
#include "igabem/splines.hpp"

namespace igabem {

/// Nodes marked for refinement, as indices into the mesh node list.
struct MarkSet {
  std::vector<int> nodes;
};

/// What a refine() call did, in terms of the old and new element/node ids.
/// Drives the mesh-axiom checks and the modified mesh-size diagnostics.
struct RefineTrace {
  std::vector<int> bisected_elements;    // old element ids
  std::vector<int> mult_increased_nodes; // old node ids
  std::vector<double> inserted_knots;    // ascending
  std::vector<int> changed_old_elements; // [T_star] \ [T_plus] as old ids
  std::vector<int> new_elements;         // [T_plus] \ [T_star] as new ids
  std::vector<int> parent_of_element;    // old id for every new element
};

struct RefineResult;

/// The discrete object [T_star]: node parameters, multiplicities, the NURBS
/// weights inherited from the initial mesh by knot insertion, and the frozen
/// closure threshold kappa0. Immutable; refine/overlay return new meshes.
class KnotMesh {
public:
  static KnotMesh initial(std::shared_ptr<const ParamCurve> curve, int p, int n0,
                          std::vector<double> initial_weights = {});

  const ParamCurve& curve() const { return *curve_; }
  std::shared_ptr<const ParamCurve> curve_ptr() const { return curve_; }
  int degree() const { return p_; }
  bool closed() const { return curve_->closed(); }
  double kappa0() const { return kappa0_; }

  int num_nodes() const { return static_cast<int>(nodes_.size()); } // includes both ends
  int num_elements() const { return num_nodes() - 1; }
  double node_param(int j) const { return nodes_[j]; }
  int multiplicity(int j) const { return mults_[j]; }
  const std::vector<double>& node_params() const { return nodes_; }
  const std::vector<int>& multiplicities() const { return mults_; }

  /// Node indices that carry estimator indicators / may be marked: 0..n for
  /// open curves, 1..n for closed ones (node n is the seam, identified with 0).
  std::vector<int> owned_nodes() const;

  double element_length(int e) const { return nodes_[e + 1] - nodes_[e]; } // h-check (parameter)
  double element_arclength(int e) const { return arclen_[e]; }             // h (curve)
  std::pair<int, int> element_node_ids(int e) const { return {e, e + 1}; }

  /// |K_star|: number of knots counted over [a,b] for open curves resp. over
  /// the window (a,b] for closed ones.
  int knot_count() const;

  /// Local mesh-ratio: max over adjacent element pairs of their parameter
  /// length ratio; 1 for a single-element mesh. Closed curves wrap.
  double mesh_ratio() const;

  /// m-fold element patches. omega^0 = seed, omega^1 adds all elements
  /// touching the seed, and so on; closed curves wrap.
  std::vector<int> patch_of_elements(std::span<const int> seed_elements, int m) const;
  std::vector<int> patch_of_nodes(std::span<const int> seed_nodes, int m) const;

  /// Clamped knot vector of the induced ansatz space.
  KnotVector knot_vector() const;
  const std::vector<double>& weights() const { return weights_; }
  NurbsSpace space() const;
  int dimension() const;

  /// Multiplicity-aware refinement:
  ///  (i)   elements with both endpoints marked are queued for bisection;
  ///  (ii)  other marked nodes get their multiplicity increased when below
  ///        p+1, otherwise their adjacent elements are queued;
  ///  (iii) closure: a neighbor T' of a queued T is queued when
  ///        h_{T'} > kappa0 * h_T;
  ///  (iv)  queued elements are bisected at the parameter midpoint, new nodes
  ///        get multiplicity 1.
  /// Supplied coefficients are transported by knot insertion so the
  /// represented density is unchanged.
  RefineResult refine(const MarkSet& marked, std::span<const double> coeffs = {}) const;

  /// True if `fine` can be reached from this mesh by knot insertion.
  bool is_refinement_of(const KnotMesh& coarse) const;

  /// Same initial mesh (overlay precondition).
  bool same_ancestry(const KnotMesh& other) const;

  friend KnotMesh overlay(const KnotMesh& a, const KnotMesh& b);

private:
  KnotMesh() = default;

  struct Ancestry {
    std::vector<double> nodes;
    std::vector<int> mults;
    int p = 0;
    int knot_count = 0;
    std::vector<double> weights;
  };

  std::shared_ptr<const ParamCurve> curve_;
  int p_ = 0;
  std::vector<double> nodes_;
  std::vector<int> mults_;
  std::vector<double> weights_;
  double kappa0_ = 1.0;
  std::shared_ptr<const Ancestry> ancestry_;
  std::vector<double> arclen_; // per element, cached

  void cache_arclengths();
  std::vector<int> element_neighbors(int e) const;
  int canonical_node(int j) const;
};

struct RefineResult {
  KnotMesh mesh;
  std::vector<double> coeffs; // empty if none supplied
  RefineTrace trace;
};

/// Coarsest common refinement: node union with maximal multiplicities.
/// Throws std::domain_error when the meshes do not share an initial mesh.
KnotMesh overlay(const KnotMesh& a, const KnotMesh& b);

/// Modified mesh-size h~|_T = |gamma^-1(omega(T))| * q1^(sum of multiplicities
/// of the nodes in omega(T)); q1 in (0,1) comes from the measured patch-shrink
/// factor of the run (q1 = q2^(1/(4p+1))).
std::vector<double> tilde_h(const KnotMesh& mesh, double q1);

/// Transport coefficients from a coarse mesh to a nested fine one by
/// sequential knot insertion (the represented function is unchanged).
std::vector<double> transport_coeffs(const KnotMesh& coarse, const KnotMesh& fine,
                                     std::span<const double> coeffs);

/// Contribution of one refinement step to the patch-shrink factor q2: the
/// largest ratio |gamma^-1(omega_+(T'))| / |gamma^-1(omega_star(father T')))|
/// over new-mesh elements in the patch of the changed region whose patch
/// length actually shrank. Returns nullopt when no h-refinement happened.
std::optional<double> measure_patch_shrink(const KnotMesh& coarse, const KnotMesh& fine,
                                           const RefineTrace& trace);

} // namespace igabem

#endif
