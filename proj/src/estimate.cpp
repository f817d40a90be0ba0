#include "fosl/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace fosl::est {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw InvalidArgument("estimate", what);
}

Mat symmetrize(const Mat& a) { return 0.5 * (a + a.transpose()); }

// Solves A X = B for symmetric positive definite A, repairing A once.
Mat spd_solve(const Mat& a, const Mat& b, double floor, const char* what) {
    Eigen::LLT<Mat> llt(symmetrize(a));
    if (llt.info() != Eigen::Success) {
        llt.compute(repair_psd(a, floor));
        if (llt.info() != Eigen::Success) throw NumericalError("estimate", std::string(what) + " is not invertible");
    }
    return llt.solve(b);
}

}  // namespace

void FilterConfig::validate(Eigen::Index n, Eigen::Index m, Eigen::Index p) const {
    require(alpha > 0.0, "alpha must be positive");
    require(q.rows() == n && q.cols() == n, "Q must be n x n");
    require(r.rows() == m && r.cols() == m, "R must be m x m");
    require(q.allFinite() && r.allFinite(), "Q and R must be finite");
    require((q - q.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + q.cwiseAbs().maxCoeff()), "Q must be symmetric");
    require((r - r.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + r.cwiseAbs().maxCoeff()), "R must be symmetric");
    Eigen::SelfAdjointEigenSolver<Mat> eq(symmetrize(q), Eigen::EigenvaluesOnly);
    require(eq.eigenvalues().minCoeff() >= -1e-12, "Q must be positive semi-definite");
    Eigen::LLT<Mat> lr(symmetrize(r));
    require(lr.info() == Eigen::Success, "R must be positive definite");
    if (g.size() > 0) require(g.rows() == n && g.cols() == p, "G must be n x p");
    if (lower.size() > 0) require(lower.size() == n, "lower bounds must have n entries");
    if (upper.size() > 0) require(upper.size() == n, "upper bounds must have n entries");
    if (lower.size() > 0 && upper.size() > 0) require((lower.array() < upper.array()).all(), "bounds need lower < upper");
    if (input_lower.size() > 0) require(input_lower.size() == p, "input bounds must have p entries");
    if (input_upper.size() > 0) require(input_upper.size() == p, "input bounds must have p entries");
    if (input_gain.size() > 0) {
        require(input_gain.size() == p, "input gain must have p entries");
        require((input_gain.array() > 0.0).all() && (input_gain.array() <= 1.0).all(), "input gain must lie in (0, 1]");
    }
    require(floor > 0.0 && rank_tol > 0.0, "regularization floor and rank tolerance must be positive");
}

Mat repair_psd(const Mat& p, double floor) {
    Mat s = symmetrize(p);
    Eigen::LLT<Mat> llt(s);
    if (llt.info() == Eigen::Success) return s;
    Eigen::SelfAdjointEigenSolver<Mat> es(s);
    Vec ev = es.eigenvalues().cwiseMax(floor);
    return symmetrize(es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose());
}

SigmaPoints sigma_points(const Vec& x, const Mat& p, const FilterConfig& cfg) {
    const Eigen::Index n = x.size();
    require(p.rows() == n && p.cols() == n, "covariance size does not match state");
    require(x.allFinite() && p.allFinite(), "non-finite filter state");
    const double lambda = cfg.alpha * cfg.alpha * (static_cast<double>(n) + cfg.kappa) - static_cast<double>(n);
    const double c = static_cast<double>(n) + lambda;
    require(c > 0.0, "sigma-point spread n + lambda must be positive");

    Eigen::LLT<Mat> llt(c * symmetrize(p));
    if (llt.info() != Eigen::Success) llt.compute(c * repair_psd(p, cfg.floor));
    if (llt.info() != Eigen::Success) {
        Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(p), Eigen::EigenvaluesOnly);
        std::ostringstream os;
        os << "covariance square root failed (eigenvalues in [" << es.eigenvalues().minCoeff() << ", "
           << es.eigenvalues().maxCoeff() << "])";
        throw NumericalError("estimate", os.str());
    }
    const Mat root = llt.matrixL();

    SigmaPoints sp;
    sp.points.resize(n, 2 * n + 1);
    sp.points.col(0) = x;
    for (Eigen::Index i = 0; i < n; ++i) {
        sp.points.col(1 + i) = x + root.col(i);
        sp.points.col(1 + n + i) = x - root.col(i);
    }
    sp.wm = Vec::Constant(2 * n + 1, 0.5 / c);
    sp.wc = sp.wm;
    sp.wm[0] = lambda / c;
    sp.wc[0] = lambda / c + (1.0 - cfg.alpha * cfg.alpha + cfg.beta);
    if (cfg.has_bounds()) project(sp.points, cfg);
    return sp;
}

void project(Mat& points, const FilterConfig& cfg) {
    for (Eigen::Index j = 0; j < points.cols(); ++j) {
        Vec col = points.col(j);
        project(col, cfg);
        points.col(j) = col;
    }
}

void project(Vec& x, const FilterConfig& cfg) {
    if (cfg.lower.size() == x.size()) x = x.cwiseMax(cfg.lower);
    if (cfg.upper.size() == x.size()) x = x.cwiseMin(cfg.upper);
}

UnscentedMoments unscented_transform(const SigmaPoints& sp, const std::function<Vec(const Vec&)>& f,
                                     const Mat* noise) {
    const Eigen::Index k = sp.points.cols();
    Vec first = f(sp.points.col(0));
    Mat y(first.size(), k);
    y.col(0) = first;
    for (Eigen::Index j = 1; j < k; ++j) y.col(j) = f(sp.points.col(j));
    if (!y.allFinite()) throw NumericalError("estimate", "non-finite value while propagating sigma points");
    UnscentedMoments m;
    m.mean = y * sp.wm;
    m.spread = y.colwise() - m.mean;
    m.cov = m.spread * sp.wc.asDiagonal() * m.spread.transpose();
    if (noise) m.cov += *noise;
    m.cov = symmetrize(m.cov);
    return m;
}

Prediction predict(const SystemModel& model, const FilterState& s, const Vec& u_prev, const Vec& u, const Vec& d,
                   const FilterConfig& cfg) {
    const SigmaPoints sp = sigma_points(s.x, s.p, cfg);
    const auto fx = unscented_transform(sp, [&](const Vec& x) { return model.fs(x, u_prev, d); }, &cfg.q);

    Prediction pr;
    pr.x = fx.mean;
    pr.p = fx.cov;
    pr.redrawn = sigma_points(pr.x, pr.p, cfg);
    const auto hz = unscented_transform(pr.redrawn, [&](const Vec& x) { return model.hs(x, u); }, &cfg.r);
    pr.z = hz.mean;
    pr.pz = hz.cov;
    pr.z_spread = hz.spread;
    const Mat dx = pr.redrawn.points.colwise() - pr.x;
    pr.pxz = dx * pr.redrawn.wc.asDiagonal() * hz.spread.transpose();
    return pr;
}

namespace {

FilterState correct(const Prediction& pr, const Vec& z, const FilterConfig& cfg) {
    require(z.size() == pr.z.size(), "measurement size does not match hs");
    // K = Pxz Pz^-1
    const Mat k = spd_solve(pr.pz, pr.pxz.transpose(), cfg.floor, "innovation covariance").transpose();
    FilterState out;
    out.y = z - pr.z;
    out.x = pr.x + k * out.y;
    if (cfg.has_bounds()) project(out.x, cfg);
    out.p = symmetrize(pr.p - k * pr.pz * k.transpose());
    Eigen::LLT<Mat> llt(out.p);
    if (llt.info() != Eigen::Success) out.p = repair_psd(out.p, cfg.floor);
    if (!out.x.allFinite() || !out.p.allFinite()) throw NumericalError("estimate", "filter state became non-finite");
    return out;
}

}  // namespace

FilterState ukf_step(const SystemModel& model, const FilterState& s, const Vec& u_prev, const Vec& u, const Vec& z,
                     const FilterConfig& cfg) {
    const Vec d = Vec::Zero(s.d.size());
    FilterState out = correct(predict(model, s, u_prev, u, d, cfg), z, cfg);
    out.d = d;
    return out;
}

InputEstimate estimate_input(const Prediction& biased, const Mat& g, const Vec& z, const Vec& d_prev,
                             const FilterConfig& cfg, const Vec& d_base) {
    const Eigen::Index p = g.cols();
    const Vec base = d_base.size() == p ? d_base : Vec::Zero(p);
    InputEstimate ie;
    ie.g = g;
    // H = Pxz' Pb^-1
    ie.h = spd_solve(biased.p, biased.pxz, cfg.floor, "biased state covariance").transpose();
    ie.r_tilde = symmetrize(ie.h * biased.p * ie.h.transpose() + cfg.r);
    ie.z_tilde = z - biased.z;
    ie.d = base;
    ie.cov = Mat::Zero(p, p);

    std::vector<Eigen::Index> active;
    for (Eigen::Index j = 0; j < p; ++j)
        if (g.col(j).cwiseAbs().maxCoeff() > 0.0) active.push_back(j);
    if (active.empty()) return ie;
    const auto pa = static_cast<Eigen::Index>(active.size());

    Mat ga(g.rows(), pa);
    for (Eigen::Index j = 0; j < pa; ++j) ga.col(j) = g.col(active[static_cast<std::size_t>(j)]);

    Eigen::LLT<Mat> llt(ie.r_tilde);
    if (llt.info() != Eigen::Success) llt.compute(repair_psd(ie.r_tilde, cfg.floor));
    if (llt.info() != Eigen::Success) throw NumericalError("estimate", "equivalent noise covariance is not invertible");
    const Mat a = llt.matrixL().solve(ie.h * ga);
    const Vec b = llt.matrixL().solve(ie.z_tilde);

    if (a.rows() < pa) throw UnobservableInputError("estimate", "more unknown inputs than measurements");
    Eigen::JacobiSVD<Mat> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vec sv = svd.singularValues();
    if (!(sv[0] > 0.0) || sv[sv.size() - 1] < cfg.rank_tol * sv[0]) {
        std::ostringstream os;
        os << "unknown input is unobservable: singular values of H G span [" << sv[sv.size() - 1] << ", " << sv[0]
           << "]";
        throw UnobservableInputError("estimate", os.str());
    }
    const Vec inv = sv.cwiseMax(cfg.floor).cwiseInverse();
    // Increment over the linearization point, then absolute values.
    const Vec step = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose() * b;
    Vec da(pa);
    for (Eigen::Index i = 0; i < pa; ++i) da[i] = base[active[static_cast<std::size_t>(i)]] + step[i];
    const Mat ca = svd.matrixV() * inv.cwiseAbs2().asDiagonal() * svd.matrixV().transpose();

    if (cfg.input_gain.size() == p) {
        std::vector<Eigen::Index> full, relaxed;
        for (Eigen::Index i = 0; i < pa; ++i) {
            const auto ii = active[static_cast<std::size_t>(i)];
            if (cfg.input_gain[ii] < 1.0) {
                const double prev = d_prev.size() == p ? d_prev[ii] : 0.0;
                da[i] = prev + cfg.input_gain[ii] * (da[i] - prev);
                relaxed.push_back(i);
            } else {
                full.push_back(i);
            }
        }
        if (!relaxed.empty() && !full.empty()) {
            Vec rest = b;
            for (auto i : relaxed) rest -= a.col(i) * (da[i] - base[active[static_cast<std::size_t>(i)]]);
            Mat af(a.rows(), static_cast<Eigen::Index>(full.size()));
            for (std::size_t c = 0; c < full.size(); ++c) af.col(static_cast<Eigen::Index>(c)) = a.col(full[c]);
            const Vec df = af.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(rest);
            for (std::size_t c = 0; c < full.size(); ++c)
                da[full[c]] = base[active[static_cast<std::size_t>(full[c])]] + df[static_cast<Eigen::Index>(c)];
        }
    }
    for (Eigen::Index i = 0; i < pa; ++i) {
        const auto ii = active[static_cast<std::size_t>(i)];
        ie.d[ii] = da[i];
        for (Eigen::Index j = 0; j < pa; ++j) ie.cov(ii, active[static_cast<std::size_t>(j)]) = ca(i, j);
    }
    if (cfg.input_lower.size() == p) ie.d = ie.d.cwiseMax(cfg.input_lower);
    if (cfg.input_upper.size() == p) ie.d = ie.d.cwiseMin(cfg.input_upper);
    return ie;
}

Mat accumulated_r_tilde(const Prediction& biased, const Mat& h, const Mat& r) {
    Mat acc = r;
    const Eigen::Index k = biased.redrawn.points.cols();
    for (Eigen::Index j = 0; j < k; ++j) {
        const Vec e = h * (biased.redrawn.points.col(j) - biased.x);
        acc += biased.redrawn.wc[j] * e * e.transpose();
    }
    return acc;
}

FilterState ukfui_step(const SystemModel& model, const FilterState& s, const Vec& u_prev, const Vec& u, const Vec& z,
                       const FilterConfig& cfg, UiDiagnostics* diag) {
    const Eigen::Index p = cfg.g.size() > 0 ? cfg.g.cols() : s.d.size();
    require(s.d.size() == p, "unknown-input estimate has the wrong size");

    // Stage 1: biased estimation, the unknown input held at zero or at its
    // previous estimate.
    const Vec d_base = cfg.bias_at_previous_input ? Vec(s.d) : Vec(Vec::Zero(p));
    const Prediction biased = predict(model, s, u_prev, u, d_base, cfg);

    Mat g = cfg.g;
    if (g.size() == 0) {
        Vec x0 = s.x;
        if (cfg.has_bounds()) project(x0, cfg);
        g.resize(s.x.size(), p);
        for (Eigen::Index j = 0; j < p; ++j) {
            const double h = cfg.sensitivity_step * std::max(1.0, std::abs(s.d[j]));
            Vec dp = s.d, dm = s.d;
            dp[j] += h;
            dm[j] -= h;
            g.col(j) = (model.fs(x0, u_prev, dp) - model.fs(x0, u_prev, dm)) / (2.0 * h);
        }
    }

    // Stage 2: unknown input from the biased innovation.
    InputEstimate input = estimate_input(biased, g, z, s.d, cfg, d_base);

    // Stage 3: unbiased estimation with the recovered input.
    const Prediction unbiased = predict(model, s, u_prev, u, input.d, cfg);
    FilterState out = correct(unbiased, z, cfg);
    out.d = input.d;
    if (diag) {
        diag->biased = biased;
        diag->input = std::move(input);
        diag->unbiased = unbiased;
    }
    return out;
}

}  // namespace fosl::est
