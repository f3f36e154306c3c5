#pragma once

#include <Eigen/Dense>

#include <complex>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qcqp/filter.hpp"
#include "qcqp/states.hpp"

namespace qcqp {

enum class Ordering { FilteredP, Wigner };
enum class AxesKind { Radial, Cartesian };

/// Quasiprobability values on a product grid.
///
/// Radial grids carry one |α| axis per mode. Cartesian grids carry two axes
/// per mode in the order Re α_1, Im α_1, Re α_2, ... . Values are stored
/// row-major with the last axis varying fastest.
struct QPGrid {
    int mode_count = 0;
    Ordering ordering = Ordering::FilteredP;
    AxesKind axes_kind = AxesKind::Radial;
    std::vector<std::vector<double>> axes;
    std::vector<double> values;
    std::optional<double> w;
    double tolerance = 0.0;       // absolute quadrature tolerance per value
    double achieved_error = 0.0;  // largest change seen in the final refinement
    std::map<std::string, std::string> provenance;

    std::size_t size() const noexcept { return values.size(); }
    std::vector<std::size_t> shape() const;
    /// Axis coordinates of the flat index.
    std::vector<double> coordinates(std::size_t flat) const;
    double at(std::initializer_list<std::size_t> idx) const;

    /// Trapezoid integral over the grid with measure 2π|α|d|α| per radial
    /// mode or dRe dIm per Cartesian mode.
    double normalization() const;
    /// Trapezoid measure weight of each flat index.
    std::vector<double> measure() const;

    /// DataError if any value is non-finite or the layout is inconsistent.
    void validate() const;
};

/// Unitary mode transformation α' = U α.
class ModeTransform {
public:
    /// ParameterError unless U is square and U U† = I within 1e-10.
    explicit ModeTransform(Eigen::MatrixXcd u);
    const Eigen::MatrixXcd& matrix() const noexcept { return u_; }
    int mode_count() const noexcept { return static_cast<int>(u_.rows()); }
    ModeTransform compose(const ModeTransform& after) const;  // after ∘ this

    static ModeTransform identity(int modes);
    /// (1/√2) [[1, 1], [-1, 1]].
    static ModeTransform beam_splitter_50_50();

private:
    Eigen::MatrixXcd u_;
};

/// Φ'(β) = Φ(U† β).
CharacteristicFunction transform_modes(const CharacteristicFunction& cf, const ModeTransform& t);

// ---------------------------------------------------------------------------
// Radial path (phase-invariant states, one or two modes).

struct RadialOptions {
    int workers = 1;
    int max_nodes = 6000;  // per axis; guards the O(nodes²) CF matrix
};

/// P_QC at the given per-mode moduli, absolute error <= tol.
double pqc_point_radial(const CharacteristicFunction& cf, const FilterTable& table, double w,
                        std::span<const double> radii, double tol, const RadialOptions& opt = {});

/// P_QC on a radial product grid (one |α| axis per mode).
QPGrid pqc_grid(const CharacteristicFunction& cf, const FilterTable& table, double w,
                const std::vector<std::vector<double>>& radial_axes, double tol,
                const RadialOptions& opt = {});

/// Wigner function on a radial grid; the b cutoff is found by scanning the
/// Gaussian-weighted characteristic function of the given state.
QPGrid wigner_grid(const CharacteristicFunction& cf, const std::vector<std::vector<double>>& radial_axes,
                   double tol, const RadialOptions& opt = {});

/// Reduced single-mode P_QC of a two-mode state via β ↦ Φ(β, 0) on mode
/// `kept_mode` (0 or 1), evaluated on the given radii.
std::vector<double> marginal_pqc(const CharacteristicFunction& cf, const FilterTable& table, double w,
                                 int kept_mode, const std::vector<double>& radii, double tol,
                                 const RadialOptions& opt = {});

/// Integrates a two-mode radial grid over one mode with the 2π|α|d|α|
/// trapezoid measure, leaving values on the other mode's axis.
std::vector<double> integrate_out_mode(const QPGrid& grid, int traced_mode);

// ---------------------------------------------------------------------------
// General Cartesian path (any state).

struct CartesianOptions {
    double step = 0.2;          // initial β step
    bool verify = true;         // refine the step until two passes agree within tol
    bool allow_large = false;   // opt-in for more than two modes
    int workers = 1;
};

/// Full 2n-dimensional trapezoid quadrature over the truncated β domain.
double pqc_point_general(const CharacteristicFunction& cf, const FilterTable& table, double w,
                         std::span<const cplx> alphas, double tol, const CartesianOptions& opt = {});

/// Batched form: points[i] holds one coordinate per mode. All points share
/// one sweep over the characteristic function.
std::vector<double> pqc_points_general(const CharacteristicFunction& cf, const FilterTable& table, double w,
                                       const std::vector<std::vector<cplx>>& points, double tol,
                                       const CartesianOptions& opt = {});

/// Cartesian grid; `axes` holds 2·modes axes (Re α_1, Im α_1, ...).
QPGrid pqc_grid_cartesian(const CharacteristicFunction& cf, const FilterTable& table, double w,
                          const std::vector<std::vector<double>>& axes, double tol,
                          const CartesianOptions& opt = {});

/// Wigner function at a point for any state.
double wigner_point(const CharacteristicFunction& cf, std::span<const cplx> alphas, double tol,
                    const CartesianOptions& opt = {});

// ---------------------------------------------------------------------------

struct NegativityReport {
    double min_value = 0.0;
    std::vector<double> argmin;
    std::size_t argmin_index = 0;
    double max_value = 0.0;
    double negative_mass = 0.0;  // ∫ min(P, 0) with the grid measure
    double normalization = 0.0;
};

NegativityReport negativity_scan(const QPGrid& grid);

void write_qpgrid_csv(const QPGrid& grid, const std::filesystem::path& path);
/// Reads a grid written by write_qpgrid_csv (DataError on schema violations).
QPGrid read_qpgrid_csv(const std::filesystem::path& path);
void write_negativity_json(const NegativityReport& report, const QPGrid& grid,
                           const std::filesystem::path& path);

}  // namespace qcqp
