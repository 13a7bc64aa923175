#include <complex>
#define lapack_complex_float std::complex<float>
#define lapack_complex_double std::complex<double>
#include <lapacke.h>

#include "hopfshock/linops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

#include "hopfshock/error.hpp"

namespace hopfshock {

namespace {

const double kD1_6[7] = {-1.0 / 60, 9.0 / 60, -45.0 / 60, 0.0, 45.0 / 60, -9.0 / 60, 1.0 / 60};
const double kD2_6[7] = {2.0 / 180, -27.0 / 180, 270.0 / 180, -490.0 / 180, 270.0 / 180, -27.0 / 180, 2.0 / 180};
const double kD1_2[7] = {0, 0, -0.5, 0, 0.5, 0, 0};
const double kD2_2[7] = {0, 0, 1, -2, 1, 0, 0};

const double* d1_stencil(int order) {
    require(order == 2 || order == 6, ErrorKind::Argument, "stencil order must be 2 or 6");
    return order == 6 ? kD1_6 : kD1_2;
}
const double* d2_stencil(int order) { return order == 6 ? kD2_6 : kD2_2; }

template <class T>
int gbtrf(int n, int kl, int ku, T* ab, int ldab, int* ipiv) {
    if constexpr (std::is_same_v<T, double>)
        return LAPACKE_dgbtrf(LAPACK_COL_MAJOR, n, n, kl, ku, ab, ldab, ipiv);
    else
        return LAPACKE_zgbtrf(LAPACK_COL_MAJOR, n, n, kl, ku, ab, ldab, ipiv);
}

template <class T>
int gbtrs(int n, int kl, int ku, int nrhs, const T* ab, int ldab, const int* ipiv, T* b) {
    if constexpr (std::is_same_v<T, double>)
        return LAPACKE_dgbtrs(LAPACK_COL_MAJOR, 'N', n, kl, ku, nrhs, ab, ldab, ipiv, b, n);
    else
        return LAPACKE_zgbtrs(LAPACK_COL_MAJOR, 'N', n, kl, ku, nrhs, ab, ldab, ipiv, b, n);
}

ComplexLinearOperator to_complex(const DiscreteLinearOperator& L) {
    ComplexLinearOperator c;
    c.grid = L.grid;
    c.components = L.components;
    c.eps = L.eps;
    c.order = L.order;
    c.closure = L.closure;
    c.bandwidth = L.bandwidth;
    c.band = L.band.cast<Complex>();
    c.U = L.U.cast<Complex>();
    c.V = L.V.cast<Complex>();
    return c;
}

double vec_norm(const Grid1D& g, const CVec& v) { return std::sqrt(g.spacing()) * v.norm(); }

}  // namespace

// ---------------------------------------------------------------- solver

template <class T>
ShiftedSolver<T>::ShiftedSolver(const LinearOperatorT<T>& L, T alpha, T beta)
    : n_(L.size()), kl_(L.bandwidth) {
    const int n = static_cast<int>(n_);
    const int ldab = 2 * kl_ + kl_ + 1;
    ab_.assign(static_cast<std::size_t>(ldab) * n_, T(0));
    auto at = [&](int i, int j) -> T& {
        return ab_[static_cast<std::size_t>(kl_ + kl_ + i - j) + static_cast<std::size_t>(j) * ldab];
    };
    for (int i = 0; i < n; ++i) at(i, i) += alpha;
    for (int i = 0; i < L.band.outerSize(); ++i)
        for (typename Eigen::SparseMatrix<T, Eigen::RowMajor>::InnerIterator it(L.band, i); it; ++it)
            at(i, static_cast<int>(it.col())) += beta * it.value();
    ipiv_.resize(n_);
    const int info = gbtrf<T>(n, kl_, kl_, ab_.data(), ldab, ipiv_.data());
    require(info == 0, ErrorKind::Numerical, "banded factorization failed (info " + std::to_string(info) + ")");
    if (L.U.cols() > 0) {
        Z_ = MatT(L.U.rows(), L.U.cols());
        for (Eigen::Index c = 0; c < L.U.cols(); ++c) Z_.col(c) = band_solve(VecT(beta * L.U.col(c)));
        V_ = L.V;
        const MatT cap = MatT::Identity(L.U.cols(), L.U.cols()) + V_.transpose() * Z_;
        Eigen::FullPivLU<MatT> lu(cap);
        require(lu.isInvertible(), ErrorKind::Numerical, "low-rank capacitance matrix is singular");
        small_ = lu.inverse();
    }
}

template <class T>
typename ShiftedSolver<T>::VecT ShiftedSolver<T>::band_solve(const VecT& rhs) const {
    VecT x = rhs;
    const int ldab = 3 * kl_ + 1;
    const int info = gbtrs<T>(static_cast<int>(n_), kl_, kl_, 1, ab_.data(), ldab, ipiv_.data(), x.data());
    require(info == 0, ErrorKind::Numerical, "banded solve failed");
    return x;
}

template <class T>
typename ShiftedSolver<T>::VecT ShiftedSolver<T>::solve(const VecT& rhs) const {
    require(static_cast<std::size_t>(rhs.size()) == n_, ErrorKind::Dimension, "solver size mismatch");
    VecT x = band_solve(rhs);
    if (Z_.cols() > 0) x -= Z_ * (small_ * (V_.transpose() * x));
    return x;
}

template class ShiftedSolver<double>;
template class ShiftedSolver<Complex>;

// ---------------------------------------------------------------- assembly

std::vector<Mat> profile_jacobians(const ShockProfile& profile, const FluxFamily& flux) {
    std::vector<Mat> A;
    A.reserve(profile.grid.size());
    for (std::size_t i = 0; i < profile.grid.size(); ++i) A.push_back(flux.jacobian(profile.eps, profile.state(i)));
    return A;
}

DiscreteLinearOperator assemble_divergence_operator(const Grid1D& grid, std::size_t n, const std::vector<Mat>& A,
                                                    int order) {
    require(A.size() == grid.size(), ErrorKind::Dimension, "one Jacobian per node expected");
    const double* d1 = d1_stencil(order);
    const double* d2 = d2_stencil(order);
    const double h = grid.spacing();
    const auto N = static_cast<long>(grid.size());
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(N) * n * 7 * (n + 1));
    for (long i = 0; i < N; ++i) {
        for (int o = -3; o <= 3; ++o) {
            const long j = i + o;
            if (j < 0 || j >= N) continue;
            const double c1 = d1[o + 3] / h, c2 = d2[o + 3] / (h * h);
            if (c1 == 0.0 && c2 == 0.0) continue;
            const Mat& Aj = A[static_cast<std::size_t>(j)];
            for (std::size_t r = 0; r < n; ++r) {
                for (std::size_t c = 0; c < n; ++c) {
                    double v = -c1 * Aj(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
                    if (r == c) v += c2;
                    if (v != 0.0)
                        trip.emplace_back(static_cast<int>(i * static_cast<long>(n) + static_cast<long>(r)),
                                          static_cast<int>(j * static_cast<long>(n) + static_cast<long>(c)), v);
                }
            }
        }
    }
    DiscreteLinearOperator L;
    L.grid = grid;
    L.components = n;
    L.order = order;
    L.bandwidth = static_cast<int>((order == 6 ? 3 : 1) * n + n - 1);
    L.band.resize(static_cast<Eigen::Index>(N * static_cast<long>(n)), static_cast<Eigen::Index>(N * static_cast<long>(n)));
    L.band.setFromTriplets(trip.begin(), trip.end());
    L.band.makeCompressed();
    return L;
}

DiscreteLinearOperator assemble_L(const ShockProfile& profile, const FluxFamily& flux, const LinopOptions& opt) {
    require(flux.dim == profile.dim, ErrorKind::Dimension, "flux and profile dimensions differ");
    auto L = assemble_divergence_operator(profile.grid, profile.dim, profile_jacobians(profile, flux), opt.order);
    L.eps = profile.eps;
    if (!opt.planted) return L;

    plant_pair(L, profile, *opt.planted);
    return L;
}

void plant_pair(DiscreteLinearOperator& L, const ShockProfile& profile, const PlantedPair& pp) {
    const std::size_t n = profile.dim;
    require(pp.first_component < n, ErrorKind::Argument, "planted component out of range");
    const auto N = static_cast<Eigen::Index>(L.size());
    L.U.resize(N, 0);
    L.V.resize(N, 0);
    Mat Q = Mat::Zero(N, 2);
    const double w2 = pp.width * pp.width;
    for (std::size_t i = 0; i < profile.grid.size(); ++i) {
        const double x = profile.grid.x(i) - pp.center;
        const double g = std::exp(-0.5 * x * x / w2);
        const double gp = -x / w2 * g;
        const auto k = static_cast<Eigen::Index>(i * n);
        if (n >= 2) {
            Q(k + static_cast<Eigen::Index>(pp.first_component), 0) = gp;
            Q(k + static_cast<Eigen::Index>((pp.first_component + 1) % n), 1) = gp;
        } else {
            Q(k, 0) = gp;
            Q(k, 1) = g + x * gp;  // (x g)'
        }
    }
    Mat M(2, 2);
    const double gamma = pp.gamma_slope * profile.eps;
    M << gamma, -pp.tau0, pp.tau0, gamma;
    // P with Pᵀ[q1 q2 ū'] = [I 0]: the translation mode stays in the kernel
    Mat W(N, 3);
    W.leftCols(2) = Q;
    W.col(2) = profile.derivative.values;
    const Mat G = W.transpose() * W;
    const Mat P = W * G.ldlt().solve(Mat::Identity(3, 3)).leftCols(2);
    Mat LQ(N, 2);
    for (int c = 0; c < 2; ++c) LQ.col(c) = L.apply(Vec(Q.col(c)));
    L.U = Q * M - LQ;
    L.V = P;
}

namespace {
template <class V>
V dx_impl(const Grid1D& grid, std::size_t n, const V& f, int order) {
    require(static_cast<std::size_t>(f.size()) == grid.size() * n, ErrorKind::Dimension, "dx size mismatch");
    const double* d1 = d1_stencil(order);
    const double h = grid.spacing();
    const auto N = static_cast<long>(grid.size());
    V out = V::Zero(f.size());
    for (long i = 0; i < N; ++i)
        for (int o = -3; o <= 3; ++o) {
            const long j = i + o;
            if (j < 0 || j >= N || d1[o + 3] == 0.0) continue;
            for (std::size_t c = 0; c < n; ++c)
                out[static_cast<Eigen::Index>(i * static_cast<long>(n) + static_cast<long>(c))] +=
                    d1[o + 3] / h * f[static_cast<Eigen::Index>(j * static_cast<long>(n) + static_cast<long>(c))];
        }
    return out;
}
}  // namespace

Vec apply_dx(const Grid1D& grid, std::size_t n, const Vec& f, int order) { return dx_impl(grid, n, f, order); }
CVec apply_dx(const Grid1D& grid, std::size_t n, const CVec& f, int order) { return dx_impl(grid, n, f, order); }

Complex inner(const Grid1D& grid, const CVec& f, const CVec& g) { return grid.spacing() * (f.array() * g.array()).sum(); }
double inner(const Grid1D& grid, const Vec& f, const Vec& g) { return grid.spacing() * f.dot(g); }

// ---------------------------------------------------------------- eigen

namespace {

std::vector<EigenPair> arnoldi_shift_invert(const ComplexLinearOperator& L, Complex sigma, std::size_t nev,
                                            std::size_t krylov, double tol) {
    const auto N = static_cast<Eigen::Index>(L.size());
    const auto m = static_cast<Eigen::Index>(std::min<std::size_t>(krylov, L.size()));
    ShiftedSolver<Complex> solver(L, -sigma, Complex(1.0));  // L - σ I
    CMat V = CMat::Zero(N, m + 1);
    CMat H = CMat::Zero(m + 1, m);
    CVec v0(N);
    for (Eigen::Index k = 0; k < N; ++k) v0[k] = 1.0 + 0.5 * std::sin(0.7 * static_cast<double>(k));
    V.col(0) = v0 / v0.norm();
    Eigen::Index built = m;
    for (Eigen::Index j = 0; j < m; ++j) {
        CVec w = solver.solve(V.col(j));
        for (int pass = 0; pass < 2; ++pass)
            for (Eigen::Index i = 0; i <= j; ++i) {
                const Complex c = V.col(i).dot(w);
                H(i, j) += c;
                w -= c * V.col(i);
            }
        const double nw = w.norm();
        H(j + 1, j) = nw;
        if (nw < 1e-14) {
            built = j + 1;
            break;
        }
        V.col(j + 1) = w / nw;
    }
    Eigen::ComplexEigenSolver<CMat> es(H.topLeftCorner(built, built));
    require(es.info() == Eigen::Success, ErrorKind::Numerical, "Hessenberg eigensolve failed");
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(built));
    for (Eigen::Index i = 0; i < built; ++i) idx[static_cast<std::size_t>(i)] = i;
    std::sort(idx.begin(), idx.end(),
              [&](auto a, auto b) { return std::abs(es.eigenvalues()[a]) > std::abs(es.eigenvalues()[b]); });
    std::vector<EigenPair> out;
    for (auto i : idx) {
        if (out.size() >= nev) break;
        const Complex mu = es.eigenvalues()[i];
        if (std::abs(mu) < 1e-300) continue;
        CVec x = V.leftCols(built) * es.eigenvectors().col(i);
        x /= x.norm();
        const Complex lam = sigma + 1.0 / mu;
        const double res = (L.apply(x) - lam * x).norm();
        if (res <= tol * std::max(1.0, std::abs(lam))) out.push_back({lam, x, res});
    }
    return out;
}

template <class T>
std::vector<Complex> dense_impl(const LinearOperatorT<T>& L, std::size_t max_unknowns) {
    require(L.size() <= max_unknowns, ErrorKind::Argument, "dense eigensolve refused above the size cap");
    std::vector<Complex> out;
    if constexpr (std::is_same_v<T, double>) {
        Eigen::EigenSolver<Mat> es(L.dense(), false);
        require(es.info() == Eigen::Success, ErrorKind::Numerical, "dense eigensolve failed");
        for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) out.push_back(es.eigenvalues()[i]);
    } else {
        Eigen::ComplexEigenSolver<CMat> es(L.dense(), false);
        require(es.info() == Eigen::Success, ErrorKind::Numerical, "dense eigensolve failed");
        for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) out.push_back(es.eigenvalues()[i]);
    }
    std::sort(out.begin(), out.end(), [](Complex a, Complex b) {
        return a.real() != b.real() ? a.real() > b.real() : a.imag() > b.imag();
    });
    return out;
}

}  // namespace

std::vector<EigenPair> eigs_near(const DiscreteLinearOperator& L, Complex sigma, std::size_t nev, std::size_t krylov,
                                 double tol) {
    return arnoldi_shift_invert(to_complex(L), sigma, nev, krylov, tol);
}

std::vector<EigenPair> eigs_near(const ComplexLinearOperator& L, Complex sigma, std::size_t nev, std::size_t krylov,
                                 double tol) {
    return arnoldi_shift_invert(L, sigma, nev, krylov, tol);
}

std::vector<Complex> dense_spectrum(const DiscreteLinearOperator& L, std::size_t max_unknowns) {
    return dense_impl(L, max_unknowns);
}
std::vector<Complex> dense_spectrum(const ComplexLinearOperator& L, std::size_t max_unknowns) {
    return dense_impl(L, max_unknowns);
}

EigenPair refine_eigenpair(const DiscreteLinearOperator& L, Complex lambda, const CVec& start, int iterations) {
    const auto Lc = to_complex(L);
    const Complex shift = lambda + Complex(1e-9, 1e-9);
    ShiftedSolver<Complex> solver(Lc, -shift, Complex(1.0));
    CVec x = start / start.norm();
    Complex lam = lambda;
    for (int it = 0; it < iterations; ++it) {
        x = solver.solve(x);
        x /= x.norm();
        lam = x.dot(Lc.apply(x));  // x^H L x
    }
    return {lam, x, (Lc.apply(x) - lam * x).norm()};
}

SpectralPair pair_from_guess(const DiscreteLinearOperator& L, Complex lambda, const CVec& guess, const CVec* phase_ref) {
    SpectralPair out;
    CVec start = guess;
    Complex lam = lambda;
    if (lam.imag() < 0) {
        lam = std::conj(lam);
        start = start.conjugate();
    }
    auto right = refine_eigenpair(L, lam, start);
    out.lambda = right.lambda;
    out.gamma = out.lambda.real();
    out.tau = out.lambda.imag();

    // normalization: unit L² norm; phase either aligned with phase_ref or with
    // h Σ φ² real positive and the sign fixed by the largest entry
    const Grid1D& g = L.grid;
    CVec phi = right.vector;
    phi /= vec_norm(g, phi);
    if (phase_ref) {
        const Complex o = phase_ref->dot(phi);
        require(std::abs(o) > 1e-3 * phase_ref->norm() * phi.norm(), ErrorKind::Conditioning,
                "eigenvector lost contact with its reference");
        phi *= std::exp(Complex(0, -std::arg(o)));
    } else {
        const Complex s2 = inner(g, phi, phi);
        phi *= std::exp(Complex(0, -0.5 * std::arg(s2)));
        Eigen::Index imax = 0;
        phi.cwiseAbs().maxCoeff(&imax);
        if (phi[imax].real() < 0) phi = -phi;
    }
    out.phi = phi;
    out.residual = (to_complex(L).apply(phi) - out.lambda * phi).norm() * std::sqrt(g.spacing());

    const auto Lt = L.transposed();
    auto left = refine_eigenpair(Lt, out.lambda, phi.conjugate(), 4);
    CVec psi = left.vector;
    const Complex nrm = inner(g, psi, phi);
    require(std::abs(nrm) > 1e-12, ErrorKind::Conditioning, "left/right eigenvectors nearly orthogonal");
    psi /= nrm;
    out.phi_left = psi;
    out.left_residual = (to_complex(Lt).apply(psi) - out.lambda * psi).norm() / psi.norm();
    out.mass = std::abs(g.spacing() * phi.sum());

    const std::size_t n = L.components;
    out.Phi = CVec::Zero(phi.size());
    for (std::size_t c = 0; c < n; ++c) {
        Complex acc = 0.0;
        for (std::size_t i = 1; i < g.size(); ++i) {
            acc += 0.5 * g.spacing() * (phi[static_cast<Eigen::Index>((i - 1) * n + c)] + phi[static_cast<Eigen::Index>(i * n + c)]);
            out.Phi[static_cast<Eigen::Index>(i * n + c)] = acc;
        }
    }

    return out;
}

SpectralPair crossing_pair(const DiscreteLinearOperator& L, const SearchBox& box) {
    require(box.im_max > box.im_min && box.shift_spacing > 0, ErrorKind::Argument, "bad search box");
    std::vector<Complex> found;
    std::vector<EigenPair> pairs;
    auto seen = [&](Complex z) {
        for (auto f : found)
            if (std::abs(f - z) < 1e-6 * std::max(1.0, std::abs(z))) return true;
        return false;
    };
    for (double re : {0.05, box.probe_re})
        for (double s = 0.0; s <= box.im_max + 1e-12; s += box.shift_spacing) {
            for (auto& p : eigs_near(L, Complex(re, s), 8)) {
                if (seen(p.lambda)) continue;
                found.push_back(p.lambda);
                found.push_back(std::conj(p.lambda));
                pairs.push_back(p);
            }
        }
    const EigenPair* best = nullptr;
    for (const auto& p : pairs) {
        const double im = std::abs(p.lambda.imag());
        if (p.lambda.real() < box.re_min || im < box.im_min || im > box.im_max) continue;
        if (!best || p.lambda.real() > best->lambda.real()) best = &p;
    }
    if (!best) fail(ErrorKind::SpectralAssumption, "no conjugate pair inside the search box");

    SpectralPair out = pair_from_guess(L, best->lambda, best->vector);

    std::sort(found.begin(), found.end(), [](Complex a, Complex b) {
        return a.real() != b.real() ? a.real() > b.real() : a.imag() > b.imag();
    });
    out.found = found;
    for (auto z : found) {
        if (z.real() < 0.0 || std::abs(z) <= box.zero_radius) continue;
        if (std::abs(z - out.lambda) < 1e-6 || std::abs(z - std::conj(out.lambda)) < 1e-6) continue;
        if (std::abs(z.imag()) > box.im_max) continue;
        out.unstable_others.push_back(z);
    }
    if (!out.unstable_others.empty()) {
        std::string list;
        for (auto z : out.unstable_others)
            list += " " + std::to_string(z.real()) + (z.imag() >= 0 ? "+" : "") + std::to_string(z.imag()) + "i";
        fail(ErrorKind::ConditionDViolated, "extra eigenvalues with nonnegative real part:" + list);
    }
    return out;
}

// ---------------------------------------------------------------- envelope

double EssentialEnvelope::margin(Complex lambda) const {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& c : curves)
        for (Eigen::Index k = 0; k < c.size(); ++k) best = std::min(best, std::abs(c[k] - lambda));
    return best;
}

EssentialEnvelope essential_envelope(const FluxFamily& flux, double eps, const Vec& xi) {
    EssentialEnvelope env;
    std::vector<double> speeds;
    for (const Vec& u : {flux.u_minus(eps), flux.u_plus(eps)}) {
        Eigen::EigenSolver<Mat> es(flux.jacobian(eps, u));
        require(es.info() == Eigen::Success, ErrorKind::Numerical, "endstate eigensolve failed");
        for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
            const Complex a = es.eigenvalues()[i];
            if (std::abs(a.imag()) > 1e-12 * std::max(1.0, std::abs(a)))
                fail(ErrorKind::SpectralAssumption, "endstate characteristic speeds are complex");
            speeds.push_back(a.real());
        }
    }
    env.speeds = Eigen::Map<Vec>(speeds.data(), static_cast<Eigen::Index>(speeds.size()));
    env.xi = xi;
    env.max_real_nonzero_xi = -std::numeric_limits<double>::infinity();
    for (double a : speeds) {
        CVec c(xi.size());
        for (Eigen::Index k = 0; k < xi.size(); ++k) {
            c[k] = Complex(-xi[k] * xi[k], a * xi[k]);
            if (xi[k] != 0.0) env.max_real_nonzero_xi = std::max(env.max_real_nonzero_xi, c[k].real());
        }
        env.curves.push_back(c);
    }
    return env;
}

// ---------------------------------------------------------------- projectors

Vec Projectors::pi(const Vec& f) const {
    if (!has_pair) return Vec::Zero(f.size());
    return from_coordinate(coordinate(f));
}

Vec Projectors::pi_zero(const Vec& f) const { return zero_right * inner(grid, zero_left, f); }

Complex Projectors::coordinate(const Vec& f) const {
    if (!has_pair) return 0.0;
    return 2.0 * grid.spacing() * (phi_left.array() * f.array().cast<Complex>()).sum();
}

Vec Projectors::from_coordinate(Complex w) const {
    if (!has_pair) return Vec::Zero(zero_right.size());
    return (w * phi).real();
}

Projectors projections(const DiscreteLinearOperator& L, const SpectralPair* pair, const ShockProfile& profile,
                       const FluxFamily& flux) {
    require(profile.grid == L.grid && profile.dim == L.components, ErrorKind::Dimension,
            "profile does not match the operator");
    Projectors P;
    P.grid = L.grid;
    P.components = L.components;
    const std::size_t n = L.components;
    P.has_pair = pair != nullptr;
    if (pair) {
        const Complex nrm = inner(L.grid, pair->phi_left, pair->phi);
        require(std::abs(nrm) > 1e-10, ErrorKind::Conditioning, "degenerate pair normalization");
        P.phi = pair->phi;
        P.phi_left = pair->phi_left / nrm;
    }
    P.zero_right = profile.derivative.values;

    // constant ℓ orthogonal to the outgoing eigenvectors S(A_-) ∪ U(A_+)
    std::vector<Vec> outgoing;
    for (int side = 0; side < 2; ++side) {
        const Vec u = side == 0 ? flux.u_minus(profile.eps) : flux.u_plus(profile.eps);
        Eigen::EigenSolver<Mat> es(flux.jacobian(profile.eps, u));
        for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
            const double a = es.eigenvalues()[i].real();
            if ((side == 0 && a < 0) || (side == 1 && a > 0)) outgoing.push_back(es.eigenvectors().col(i).real());
        }
    }
    const Vec jump = profile.u_plus - profile.u_minus;
    Vec ell;
    if (outgoing.empty()) {
        ell = jump / jump.squaredNorm();
    } else {
        Mat R(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(outgoing.size()));
        for (std::size_t k = 0; k < outgoing.size(); ++k) R.col(static_cast<Eigen::Index>(k)) = outgoing[k];
        Eigen::JacobiSVD<Mat> svd(R.transpose(), Eigen::ComputeFullV);
        ell = svd.matrixV().col(static_cast<Eigen::Index>(n) - 1);
        const double d = ell.dot(jump);
        require(std::abs(d) > 1e-10, ErrorKind::Conditioning, "ℓ is orthogonal to the jump");
        ell /= d;
    }
    P.ell = ell;

    // discrete left null vector by inverse iteration on Lᵀ from the constant ℓ
    const auto Lt = L.transposed();
    ShiftedSolver<double> solver(Lt, -1e-2, 1.0);
    Vec z(static_cast<Eigen::Index>(L.size()));
    for (std::size_t i = 0; i < L.grid.size(); ++i) z.segment(static_cast<Eigen::Index>(i * n), static_cast<Eigen::Index>(n)) = ell;
    for (int it = 0; it < 30; ++it) {
        z = solver.solve(z);
        z /= z.norm();
    }
    const double nz = inner(L.grid, z, P.zero_right);
    require(std::abs(nz) > 1e-12, ErrorKind::Conditioning, "left null vector orthogonal to ū'");
    P.zero_left = z / nz;
    return P;
}

// ---------------------------------------------------------------- semigroup

SemigroupStepper::SemigroupStepper(const DiscreteLinearOperator& L, double dt)
    : L_(std::make_shared<DiscreteLinearOperator>(L)), dt_(dt), solver_(L, 1.0, -0.5 * dt) {
    require(dt > 0.0, ErrorKind::Domain, "time step must be positive");
}

Vec SemigroupStepper::cn_step(const Vec& u, const Vec& forcing) const {
    Vec rhs = u + 0.5 * dt_ * L_->apply(u);
    if (forcing.size()) rhs += dt_ * forcing;
    return solver_.solve(rhs);
}

Vec SemigroupStepper::half_euler(const Vec& u, const Vec& forcing) const {
    Vec rhs = u;
    if (forcing.size()) rhs += 0.5 * dt_ * forcing;
    return solver_.solve(rhs);
}

Vec SemigroupStepper::propagate(const Vec& u, std::size_t steps) const {
    Vec x = u;
    const Vec none;
    for (std::size_t s = 0; s < steps; ++s) {
        if (s == 0) {
            x = half_euler(half_euler(x, none), none);
        } else {
            x = cn_step(x, none);
        }
    }
    return x;
}

GridFunction semigroup_step(const DiscreteLinearOperator& L, const GridFunction& f, double t, std::size_t substeps,
                            const Projectors* proj) {
    require(t > 0.0, ErrorKind::Domain, "semigroup time must be positive");
    require(substeps >= 1, ErrorKind::Argument, "need at least one substep");
    require(f.grid == L.grid && f.components == L.components, ErrorKind::Dimension, "input not on the operator grid");
    Vec x = f.values;
    if (proj) x = proj->pi_tilde(x);
    const SemigroupStepper stepper(L, t / static_cast<double>(substeps));
    x = stepper.propagate(x, substeps);
    if (proj) x = proj->pi_tilde(x);
    return GridFunction(f.grid, f.components, x);
}

}  // namespace hopfshock
