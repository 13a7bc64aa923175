#include "hopfshock/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/math/tools/minima.hpp>
#include <json.hpp>

#include "hopfshock/error.hpp"

namespace hopfshock {

namespace {
using std::erf;
using std::exp;
using std::pow;
using std::sqrt;
#include "generated/kernel_derivatives.inc"
}  // namespace

double errfn(double z) {
    // (1/2π)·(√π/2)·erfc(-z)
    return std::sqrt(std::numbers::pi) / (4.0 * std::numbers::pi) * std::erfc(-z);
}

ModelKernel ModelKernel::gaussian(double speed) {
    ModelKernel k;
    k.a = speed;
    k.mode = KernelMode::GaussianK;
    k.validate();
    return k;
}

ModelKernel ModelKernel::excited(double speed, std::function<double(double)> ubar_prime) {
    ModelKernel k;
    k.a = speed;
    k.mode = KernelMode::ExcitedJ;
    k.profile_derivative = std::move(ubar_prime);
    k.validate();
    return k;
}

void ModelKernel::validate() const {
    require(a != 0.0 && std::isfinite(a), ErrorKind::Argument, "kernel speed must be nonzero (noncharacteristic)");
    if (mode == KernelMode::ExcitedJ)
        require(static_cast<bool>(profile_derivative), ErrorKind::Argument, "excited kernel needs ū'");
}

double gaussian_derivative_comoving(int alpha, int beta, double xi, double t, double a) {
    require(t > 0.0, ErrorKind::Domain, "kernel evaluated at t <= 0");
    require(alpha >= 0 && alpha <= kMaxAlpha && beta >= 0 && beta <= kMaxBeta, ErrorKind::Argument,
            "derivative order out of range");
    return model_k_derivative(alpha, beta, xi, t, a);
}

double kernel_derivative(const ModelKernel& k, int alpha, int beta, double x, double t, double y) {
    require(t > 0.0, ErrorKind::Domain, "kernel evaluated at t <= 0");
    require(alpha >= 0 && alpha <= kMaxAlpha && beta >= 0 && beta <= kMaxBeta, ErrorKind::Argument,
            "derivative order out of range");
    if (k.mode == KernelMode::GaussianK) return model_k_derivative(alpha, beta, x - y - k.a * t, t, k.a);
    const double factor = (alpha == 0 && beta == 0) ? errfn((-y - k.a * t) / (2.0 * std::sqrt(t)))
                                                    : model_errfn_derivative(alpha, beta, y, t, k.a);
    return k.profile_derivative(x) * factor;
}

double cutoff_t(double t) {
    if (t <= 0.5) return 0.0;
    if (t >= 1.0) return 1.0;
    const double s = 2.0 * (t - 0.5);
    return s * s * (3.0 - 2.0 * s);
}

double scattered_center(double a_j, double a_k, double y, double t) { return a_j * (t - std::abs(y) / std::abs(a_k)); }

double scattered_rate(double a_j, double a_k, double x_part, double y, double t) {
    const double r = a_j / a_k;
    return std::abs(x_part) / std::abs(a_j * t) + std::abs(y) / std::abs(a_k * t) * r * r;
}

namespace {

struct Side {
    Vec a;
    Mat r, l;
};

struct Coefficients {
    Vec excited;
    Mat reflected;    // (j over incoming side, k over incoming side)
    Mat transmitted;  // (j over outgoing side, k over incoming side)
};

double heat(double xi, double t) { return std::exp(-xi * xi / (4.0 * t)) / std::sqrt(4.0 * std::numbers::pi * t); }

double spread_heat(double xi, double beta, double t) {
    if (beta <= 0.0) return 0.0;
    return std::exp(-xi * xi / (4.0 * beta * t)) / std::sqrt(4.0 * std::numbers::pi * beta * t);
}

double weight_minus(double x) { return 1.0 / (1.0 + std::exp(2.0 * x)); }  // e^{-x}/(e^x+e^{-x})
double weight_plus(double x) { return 1.0 / (1.0 + std::exp(-2.0 * x)); }  // e^{x}/(e^x+e^{-x})

// The y <= 0 formula with `in` the side the source sits on.
Mat half_green(std::size_t n, const Side& in, const Side& out, const Coefficients& c, const Vec& ubar_prime, double x,
               double t, double y, bool excited, bool scattering) {
    Mat G = Mat::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    const Eigen::Index m_in = in.a.size(), m_out = out.a.size();
    if (excited) {
        const double s4t = std::sqrt(4.0 * t);
        for (Eigen::Index k = 0; k < m_in; ++k) {
            if (in.a[k] <= 0 || c.excited[k] == 0.0) continue;
            const double e = errfn((y + in.a[k] * t) / s4t) - errfn((y - in.a[k] * t) / s4t);
            G += c.excited[k] * e * ubar_prime * in.l.col(k).transpose();
        }
    }
    const double chi = cutoff_t(t);
    if (!scattering || chi == 0.0) return G;
    Mat S = Mat::Zero(G.rows(), G.cols());
    const double wm = weight_minus(x), wp = weight_plus(x);
    const double x_neg = std::min(x, 0.0), x_pos = std::max(x, 0.0);
    for (Eigen::Index k = 0; k < m_in; ++k) {
        const double ak = in.a[k];
        const Mat rl = in.r.col(k) * in.l.col(k).transpose();
        const double g = heat(x - y - ak * t, t);
        if (ak < 0) {
            S += g * rl;
            continue;
        }
        S += g * wm * rl;
        for (Eigen::Index j = 0; j < m_in; ++j) {
            if (in.a[j] >= 0 || c.reflected(j, k) == 0.0) continue;
            const double z = scattered_center(in.a[j], ak, y, t);
            const double b = scattered_rate(in.a[j], ak, x_neg, y, t);
            S += c.reflected(j, k) * spread_heat(x - z, b, t) * wm * in.r.col(j) * in.l.col(k).transpose();
        }
        for (Eigen::Index j = 0; j < m_out; ++j) {
            if (out.a[j] <= 0 || c.transmitted(j, k) == 0.0) continue;
            const double z = scattered_center(out.a[j], ak, y, t);
            const double b = scattered_rate(out.a[j], ak, x_pos, y, t);
            S += c.transmitted(j, k) * spread_heat(x - z, b, t) * wp * out.r.col(j) * in.l.col(k).transpose();
        }
    }
    return G + chi * S;
}

Coefficients sized(const Vec& e, const Mat& refl, const Mat& trans, Eigen::Index m_in, Eigen::Index m_out) {
    Coefficients c;
    c.excited = e.size() == m_in ? e : Vec::Zero(m_in);
    c.reflected = (refl.rows() == m_in && refl.cols() == m_in) ? refl : Mat::Zero(m_in, m_in);
    c.transmitted = (trans.rows() == m_out && trans.cols() == m_in) ? trans : Mat::Zero(m_out, m_in);
    return c;
}

}  // namespace

void GreensModel::validate() const {
    require(dim >= 1, ErrorKind::Argument, "Green model dimension must be positive");
    const auto n = static_cast<Eigen::Index>(dim);
    for (const Vec* s : {&speeds_minus, &speeds_plus}) {
        for (Eigen::Index i = 0; i < s->size(); ++i) {
            require(std::isfinite((*s)[i]) && (*s)[i] != 0.0, ErrorKind::SpectralAssumption,
                    "characteristic speeds must be real and nonzero");
            for (Eigen::Index j = 0; j < i; ++j)
                require((*s)[i] != (*s)[j], ErrorKind::SpectralAssumption, "characteristic speeds must be distinct");
        }
    }
    require(right_minus.rows() == n && right_minus.cols() == speeds_minus.size() && left_minus.rows() == n &&
                left_minus.cols() == speeds_minus.size(),
            ErrorKind::Dimension, "minus-side eigenvector shapes do not match speeds");
    require(right_plus.rows() == n && right_plus.cols() == speeds_plus.size() && left_plus.rows() == n &&
                left_plus.cols() == speeds_plus.size(),
            ErrorKind::Dimension, "plus-side eigenvector shapes do not match speeds");
}

GreensModel GreensModel::scalar(double a_minus, double a_plus) {
    GreensModel g;
    g.dim = 1;
    g.speeds_minus = Vec::Constant(1, a_minus);
    g.speeds_plus = Vec::Constant(1, a_plus);
    g.right_minus = g.left_minus = g.right_plus = g.left_plus = Mat::Ones(1, 1);
    g.profile_derivative = [](double) { return Vec::Zero(1); };
    return g;
}

Mat eval_model_green(const GreensModel& g, double x, double t, double y) {
    require(t > 0.0, ErrorKind::Domain, "Green function evaluated at t <= 0");
    const Vec up = g.profile_derivative ? g.profile_derivative(x) : Vec::Zero(static_cast<Eigen::Index>(g.dim));
    const Side minus{g.speeds_minus, g.right_minus, g.left_minus};
    const Side plus{g.speeds_plus, g.right_plus, g.left_plus};
    if (y <= 0.0) {
        const auto c = sized(g.excited_minus, g.reflected_minus, g.transmitted_minus, minus.a.size(), plus.a.size());
        return half_green(g.dim, minus, plus, c, up, x, t, y, g.include_excited, g.include_scattering);
    }
    // mirror x -> -x, y -> -y with speeds negated and sides exchanged
    const Side in{-g.speeds_plus, g.right_plus, g.left_plus};
    const Side out{-g.speeds_minus, g.right_minus, g.left_minus};
    const auto c = sized(g.excited_plus, g.reflected_plus, g.transmitted_plus, in.a.size(), out.a.size());
    return half_green(g.dim, in, out, c, up, -x, t, -y, g.include_excited, g.include_scattering);
}

GridFunction apply_transverse(const GreensModel& g, const GridFunction& f, double T) {
    require(T > 0.0, ErrorKind::Domain, "transverse step needs T > 0");
    require(f.components == g.dim, ErrorKind::Dimension, "density components do not match the Green model");
    const auto w = trapezoid_weights(f.grid);
    const auto n = static_cast<Eigen::Index>(g.dim);
    GridFunction out(f.grid, g.dim);
    for (std::size_t i = 0; i < f.grid.size(); ++i) {
        Vec acc = Vec::Zero(n);
        for (std::size_t j = 0; j < f.grid.size(); ++j) {
            const Vec fj = f.values.segment(static_cast<Eigen::Index>(j * g.dim), n);
            if (fj.isZero(0.0)) continue;
            acc += w[static_cast<Eigen::Index>(j)] * eval_model_green(g, f.grid.x(i), T, f.grid.x(j)) * fj;
        }
        out.values.segment(static_cast<Eigen::Index>(i * g.dim), n) = acc;
    }
    return out;
}

GridFunction apply_transverse(const ModelKernel& k, const GridFunction& f, double T) {
    require(T > 0.0, ErrorKind::Domain, "transverse step needs T > 0");
    k.validate();
    const auto w = trapezoid_weights(f.grid);
    GridFunction out(f.grid, f.components);
    const std::size_t N = f.grid.size();
    std::vector<double> col(N);
    for (std::size_t i = 0; i < N; ++i) {
        for (std::size_t j = 0; j < N; ++j) col[j] = w[static_cast<Eigen::Index>(j)] * kernel_derivative(k, 0, 0, f.grid.x(i), T, f.grid.x(j));
        for (std::size_t c = 0; c < f.components; ++c) {
            double acc = 0.0;
            for (std::size_t j = 0; j < N; ++j) acc += col[j] * f.at(j, c);
            out.at(i, c) = acc;
        }
    }
    return out;
}

namespace {

double norm_of_samples(const Grid1D& g, const Vec& v, NormKind kind) {
    switch (kind) {
        case NormKind::B1: return l2_norm(g, 1, v);
        case NormKind::X1: return x1_norm(g, 1, v);
        default: fail(ErrorKind::Argument, "kernel norm laws support B1 and X1 only");
    }
}

}  // namespace

double kernel_norm(const ModelKernel& k, int alpha, int beta, NormKind kind, double T, const Grid1D& grid) {
    require(T > 0.0, ErrorKind::Domain, "kernel norm at T <= 0");
    const std::size_t N = grid.size();
    Vec v(static_cast<Eigen::Index>(N));
    if (k.mode == KernelMode::GaussianK) {
        // B1 is translation invariant, so evaluate in the comoving variable
        for (std::size_t i = 0; i < N; ++i)
            v[static_cast<Eigen::Index>(i)] = kind == NormKind::B1 ? gaussian_derivative_comoving(alpha, beta, grid.x(i), T, k.a)
                                                                   : kernel_derivative(k, alpha, beta, grid.x(i), T, 0.0);
        return norm_of_samples(grid, v, kind);
    }
    for (std::size_t i = 0; i < N; ++i) v[static_cast<Eigen::Index>(i)] = k.profile_derivative(grid.x(i));
    const double base = norm_of_samples(grid, v, kind);
    auto factor = [&](double y) {
        return (alpha == 0 && beta == 0) ? errfn((-y - k.a * T) / (2.0 * std::sqrt(T)))
                                         : model_errfn_derivative(alpha, beta, y, T, k.a);
    };
    const double centre = -k.a * T, width = 2.0 * std::sqrt(T);
    double best_y = centre, best = 0.0;
    for (int s = -160; s <= 160; ++s) {
        const double y = centre + width * 0.05 * s;
        const double f = std::abs(factor(y));
        if (f > best) {
            best = f;
            best_y = y;
        }
    }
    const auto r = boost::math::tools::brent_find_minima([&](double y) { return -std::abs(factor(y)); },
                                                         best_y - 0.05 * width, best_y + 0.05 * width, 52);
    return base * std::max(best, -r.second);
}

NormLaw fit_norm_law(const ModelKernel& k, int alpha, int beta, NormKind kind, const std::vector<double>& times,
                     const Grid1D& grid) {
    k.validate();
    require(times.size() >= 3, ErrorKind::Argument, "norm law needs at least 3 times");
    const auto [lo, hi] = std::minmax_element(times.begin(), times.end());
    require(*lo > 0.0 && *hi / *lo >= 100.0, ErrorKind::Argument, "T range must span at least two decades");
    if (k.mode == KernelMode::GaussianK) {
        // fraction of K's Gaussian mass outside the window around the moving peak
        const double tail = std::erfc(grid.half_width() / (2.0 * std::sqrt(*hi)));
        require(tail <= 1e-6, ErrorKind::DomainTooSmall, "grid too small for the largest T");
    } else {
        double peak = 0.0;
        for (std::size_t i = 0; i < grid.size(); ++i) peak = std::max(peak, std::abs(k.profile_derivative(grid.x(i))));
        const double edge = std::max(std::abs(k.profile_derivative(grid.x(0))),
                                     std::abs(k.profile_derivative(grid.x(grid.size() - 1))));
        require(peak > 0.0 && edge <= 1e-6 * peak, ErrorKind::DomainTooSmall, "profile tail reaches the grid edge");
    }
    NormLaw law;
    law.times = times;
    for (double T : times) law.norms.push_back(kernel_norm(k, alpha, beta, kind, T, grid));
    const auto fit = fit_power_law(law.times, law.norms);
    law.exponent = fit.exponent;
    law.constant = fit.constant;
    law.residual = fit.residual;
    return law;
}

GreensModel greens_model_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
        fail(ErrorKind::Configuration, std::string("bad Green model JSON: ") + e.what());
    }
    auto vec = [&](const char* key) {
        if (!j.contains(key)) return Vec();
        const auto v = j[key].get<std::vector<double>>();
        return Vec(Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())));
    };
    // matrices are given as lists of columns
    auto mat = [&](const char* key, Eigen::Index rows) {
        if (!j.contains(key)) return Mat();
        const auto cols = j[key].get<std::vector<std::vector<double>>>();
        Mat m(rows, static_cast<Eigen::Index>(cols.size()));
        for (std::size_t c = 0; c < cols.size(); ++c) {
            require(static_cast<Eigen::Index>(cols[c].size()) == rows, ErrorKind::Dimension, std::string(key) + " column length");
            for (Eigen::Index r = 0; r < rows; ++r) m(r, static_cast<Eigen::Index>(c)) = cols[c][static_cast<std::size_t>(r)];
        }
        return m;
    };
    GreensModel g;
    g.dim = j.value("dim", 1u);
    const auto n = static_cast<Eigen::Index>(g.dim);
    g.speeds_minus = vec("speeds_minus");
    g.speeds_plus = vec("speeds_plus");
    g.right_minus = mat("right_minus", n);
    g.left_minus = mat("left_minus", n);
    g.right_plus = mat("right_plus", n);
    g.left_plus = mat("left_plus", n);
    g.excited_minus = vec("excited_minus");
    g.excited_plus = vec("excited_plus");
    g.reflected_minus = mat("reflected_minus", g.speeds_minus.size());
    g.transmitted_minus = mat("transmitted_minus", g.speeds_plus.size());
    g.reflected_plus = mat("reflected_plus", g.speeds_plus.size());
    g.transmitted_plus = mat("transmitted_plus", g.speeds_minus.size());
    g.include_excited = j.value("include_excited", true);
    g.include_scattering = j.value("include_scattering", true);
    g.profile_derivative = [n](double) { return Vec(Vec::Zero(n)); };
    g.validate();
    return g;
}

}  // namespace hopfshock
