#include "moelab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <set>
#include <stdexcept>

namespace moelab {

MoEGrads MoEGrads::zeros(const MoEConfig& cfg) {
    MoEGrads g;
    g.routing = Eigen::MatrixXd::Zero(cfg.m, cfg.d);
    g.bias = Eigen::VectorXd::Zero(cfg.m);
    g.A.assign(cfg.m, Eigen::MatrixXd::Zero(cfg.d, cfg.w));
    g.B.assign(cfg.m, Eigen::MatrixXd::Zero(cfg.d, cfg.w));
    return g;
}

double MoEGrads::squared_norm() const {
    double s = routing.squaredNorm() + bias.squaredNorm();
    for (const auto& M : A) s += M.squaredNorm();
    for (const auto& M : B) s += M.squaredNorm();
    return s;
}

MoELayer init_student(const MoEConfig& cfg, double init_scale, std::uint64_t seed) {
    if (init_scale <= 0.0) init_scale = 1.0 / std::sqrt(static_cast<double>(std::max(cfg.w, cfg.d)));
    MoELayer layer = MoELayer::zeros(cfg);
    Rng rng(seed, 0x696e6974u);
    for (int i = 0; i < cfg.m; ++i)
        for (int c = 0; c < cfg.d; ++c) layer.routing(i, c) = rng.normal();
    for (int j = 0; j < cfg.m; ++j)
        for (int c = 0; c < cfg.w; ++c)
            for (int r = 0; r < cfg.d; ++r) layer.A[j](r, c) = init_scale * rng.normal();
    for (int j = 0; j < cfg.m; ++j)
        for (int c = 0; c < cfg.w; ++c)
            for (int r = 0; r < cfg.d; ++r) layer.B[j](r, c) = init_scale * rng.normal();
    return layer;
}

namespace {

// Scalar-templated core so the f32 option exercises genuine single-precision
// arithmetic rather than rounded doubles.
template <typename Scalar>
double loss_and_grads_impl(const MoELayer& L, const Eigen::MatrixXd& X,
                           const Eigen::MatrixXd& Y, MoEGrads& grads) {
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    const MoEConfig& cfg = L.config;
    const long n = X.rows();
    const Mat R = L.routing.cast<Scalar>();
    const Vec bias = L.bias.cast<Scalar>();
    std::vector<Mat> A(cfg.m), B(cfg.m);
    for (int j = 0; j < cfg.m; ++j) {
        A[j] = L.A[j].cast<Scalar>();
        B[j] = L.B[j].cast<Scalar>();
    }
    Mat gR = Mat::Zero(cfg.m, cfg.d);
    Vec gbias = Vec::Zero(cfg.m);
    std::vector<Mat> gA(cfg.m, Mat::Zero(cfg.d, cfg.w)), gB(cfg.m, Mat::Zero(cfg.d, cfg.w));

    Scalar loss = 0;
    const Scalar inv_n = Scalar(1) / Scalar(n);
    for (long row = 0; row < n; ++row) {
        const Vec x = X.row(row).transpose().cast<Scalar>();
        const Vec y = Y.row(row).transpose().cast<Scalar>();
        const Vec scores = R * x + bias;
        const ActiveSet sel = top_k_by_score(scores.template cast<double>(), cfg.k);

        // gating weights over the selected experts
        std::vector<Scalar> gate(sel.indices.size(), Scalar(1));
        if (cfg.gating == Gating::SoftmaxTopK) {
            Scalar mx = scores(sel.indices[0]);
            for (int j : sel.indices) mx = std::max(mx, scores(j));
            Scalar z = 0;
            for (std::size_t t = 0; t < sel.indices.size(); ++t) {
                gate[t] = std::exp(scores(sel.indices[t]) - mx);
                z += gate[t];
            }
            for (auto& g : gate) g /= z;
        }

        std::vector<Vec> act(sel.indices.size()), pre(sel.indices.size());
        Vec f = Vec::Zero(cfg.d);
        for (std::size_t t = 0; t < sel.indices.size(); ++t) {
            const int j = sel.indices[t];
            pre[t] = B[j].transpose() * x;
            switch (cfg.activation) {
                case Activation::Constant: act[t] = Vec::Ones(cfg.w); break;
                case Activation::Linear: act[t] = pre[t]; break;
                case Activation::Relu: act[t] = pre[t].cwiseMax(Scalar(0)); break;
            }
            f += gate[t] * (A[j] * act[t]);
        }
        const Vec resid = f - y;
        loss += resid.squaredNorm() * inv_n;
        const Vec df = Scalar(2) * inv_n * resid;

        std::vector<Scalar> dgate(sel.indices.size(), Scalar(0));
        for (std::size_t t = 0; t < sel.indices.size(); ++t) {
            const int j = sel.indices[t];
            const Vec Aact = A[j] * act[t];
            gA[j] += gate[t] * df * act[t].transpose();
            Vec dact = gate[t] * (A[j].transpose() * df);
            if (cfg.activation == Activation::Linear) {
                gB[j] += x * dact.transpose();
            } else if (cfg.activation == Activation::Relu) {
                // subgradient 0 at the kink
                for (int c = 0; c < cfg.w; ++c)
                    if (pre[t](c) <= Scalar(0)) dact(c) = Scalar(0);
                gB[j] += x * dact.transpose();
            }
            dgate[t] = df.dot(Aact);
        }
        if (cfg.gating == Gating::SoftmaxTopK) {
            Scalar dot = 0;
            for (std::size_t t = 0; t < sel.indices.size(); ++t) dot += gate[t] * dgate[t];
            for (std::size_t t = 0; t < sel.indices.size(); ++t) {
                const Scalar ds = gate[t] * (dgate[t] - dot);
                gR.row(sel.indices[t]) += ds * x.transpose();
                if (cfg.route_bias) gbias(sel.indices[t]) += ds;
            }
        }
    }

    grads.routing = gR.template cast<double>();
    grads.bias = gbias.template cast<double>();
    grads.A.resize(cfg.m);
    grads.B.resize(cfg.m);
    for (int j = 0; j < cfg.m; ++j) {
        grads.A[j] = gA[j].template cast<double>();
        grads.B[j] = gB[j].template cast<double>();
    }
    return static_cast<double>(loss);
}

} // namespace

double loss_and_grads(const MoELayer& student, const Eigen::MatrixXd& X,
                      const Eigen::MatrixXd& Y, MoEGrads& grads, Precision precision) {
    if (X.rows() != Y.rows()) throw std::invalid_argument("loss_and_grads: row mismatch");
    if (X.cols() != student.config.d || Y.cols() != student.config.d)
        throw std::invalid_argument("loss_and_grads: column mismatch");
    return precision == Precision::F64 ? loss_and_grads_impl<double>(student, X, Y, grads)
                                       : loss_and_grads_impl<float>(student, X, Y, grads);
}

namespace {

// flat coordinate space: routing, bias (if enabled), A_0..A_{m-1}, B_0..B_{m-1}
struct CoordSpace {
    const MoEConfig& cfg;
    long n_routing, n_bias, n_expert, total;

    explicit CoordSpace(const MoEConfig& c)
        : cfg(c),
          n_routing(static_cast<long>(c.m) * c.d),
          n_bias(c.route_bias ? c.m : 0),
          n_expert(static_cast<long>(c.m) * c.d * c.w),
          total(n_routing + n_bias + 2 * n_expert) {}

    double* locate(MoELayer& L, long idx) const {
        if (idx < n_routing) return &L.routing(idx / cfg.d, idx % cfg.d);
        idx -= n_routing;
        if (idx < n_bias) return &L.bias(idx);
        idx -= n_bias;
        auto& bank = (idx < n_expert) ? L.A : L.B;
        if (idx >= n_expert) idx -= n_expert;
        const long per = static_cast<long>(cfg.d) * cfg.w;
        return &bank[idx / per](idx % per % cfg.d, idx % per / cfg.d);
    }

    double analytic(const MoEGrads& g, long idx) const {
        if (idx < n_routing) return g.routing(idx / cfg.d, idx % cfg.d);
        idx -= n_routing;
        if (idx < n_bias) return g.bias(idx);
        idx -= n_bias;
        const auto& bank = (idx < n_expert) ? g.A : g.B;
        if (idx >= n_expert) idx -= n_expert;
        const long per = static_cast<long>(cfg.d) * cfg.w;
        return bank[idx / per](idx % per % cfg.d, idx % per / cfg.d);
    }

    // true when a ReLU coordinate perturbation can cross a kink at this input
    bool near_kink(const MoELayer& L, const Eigen::VectorXd& x, long idx, double h) const {
        if (cfg.activation != Activation::Relu) return false;
        idx -= n_routing + n_bias;
        if (idx < n_expert) return false;  // A coordinates never move the preactivation
        idx -= n_expert;
        const long per = static_cast<long>(cfg.d) * cfg.w;
        const int j = static_cast<int>(idx / per);
        const int r = static_cast<int>(idx % per % cfg.d);
        const int c = static_cast<int>(idx % per / cfg.d);
        const double pre = L.B[j].col(c).dot(x);
        return std::abs(pre) <= 10.0 * h * std::max(1.0, std::abs(x(r)));
    }
};

} // namespace

FiniteDiffReport finite_diff_check(const MoELayer& student, const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& y, double h, double tol,
                                   long max_coords, std::uint64_t seed) {
    const MoEConfig& cfg = student.config;
    // boundary check: selection must be locally constant under O(h) moves
    if (cfg.k < cfg.m) {
        Eigen::VectorXd s = routing_scores(student, x);
        std::vector<double> sorted(s.data(), s.data() + s.size());
        std::sort(sorted.begin(), sorted.end(), std::greater<double>());
        double max_r = 0.0;
        for (int i = 0; i < cfg.m; ++i) max_r = std::max(max_r, student.routing.row(i).norm());
        if (sorted[cfg.k - 1] - sorted[cfg.k] <= 10.0 * h * max_r)
            throw std::domain_error("finite_diff_check: input too close to a routing boundary");
    }

    Eigen::MatrixXd X = x.transpose(), Y = y.transpose();
    MoEGrads grads;
    loss_and_grads(student, X, Y, grads);

    CoordSpace space(cfg);
    std::vector<long> coords;
    if (max_coords <= 0 || max_coords >= space.total) {
        coords.resize(space.total);
        for (long i = 0; i < space.total; ++i) coords[i] = i;
    } else {
        Rng rng(seed, 0x66646366u);
        std::set<long> pick;
        while (static_cast<long>(pick.size()) < max_coords)
            pick.insert(static_cast<long>(rng.below(static_cast<std::uint64_t>(space.total))));
        coords.assign(pick.begin(), pick.end());
    }

    FiniteDiffReport rep;
    rep.tol = tol;
    MoELayer work = student;
    MoEGrads scratch;
    for (long idx : coords) {
        if (space.near_kink(student, x, idx, h)) {
            ++rep.n_excluded;
            continue;
        }
        double* p = space.locate(work, idx);
        const double orig = *p;
        *p = orig + h;
        const double lp = loss_and_grads(work, X, Y, scratch);
        *p = orig - h;
        const double lm = loss_and_grads(work, X, Y, scratch);
        *p = orig;
        const double fd = (lp - lm) / (2.0 * h);
        const double an = space.analytic(grads, idx);
        rep.max_rel_err = std::max(rep.max_rel_err, std::abs(an - fd) / std::max(1.0, std::abs(an)));
        ++rep.n_checked;
    }
    rep.pass = rep.n_checked > 0 && rep.max_rel_err <= tol;
    return rep;
}

TrainLog train(const MoELayer& teacher, MoELayer& student, const InputDistribution& dist,
               const TrainConfig& tc) {
    if (teacher.config.d != student.config.d || dist.d != student.config.d)
        throw std::invalid_argument("train: dimension mismatch");
    if (tc.batch_size <= 0 || tc.total_samples <= 0 || tc.lr0 <= 0.0)
        throw std::invalid_argument("train: bad config");

    TrainLog log;
    log.seed = tc.seed;

    // fixed held-out eval set, disjoint stream from the training data
    Rng eval_rng(tc.seed, 0x6576616cu);
    Eigen::MatrixXd Xe(tc.eval_samples, dist.d);
    for (long r = 0; r < tc.eval_samples; ++r) Xe.row(r) = sample_input_row(dist, eval_rng).transpose();
    const Eigen::MatrixXd Ye = forward_batch(teacher, Xe);
    log.teacher_norm_sq = Ye.squaredNorm() / tc.eval_samples;

    auto eval_loss = [&]() -> double {
        try {
            return (forward_batch(student, Xe) - Ye).squaredNorm() / tc.eval_samples;
        } catch (const std::runtime_error&) {
            return std::numeric_limits<double>::quiet_NaN();
        }
    };

    const long T = std::max<long>(1, tc.total_samples / tc.batch_size);
    Rng data_rng(tc.seed, 0x64617461u);
    MoEGrads grads, vel;
    if (tc.momentum > 0.0) vel = MoEGrads::zeros(student.config);
    Eigen::MatrixXd X(tc.batch_size, dist.d);

    for (long t = 0; t < T; ++t) {
        const double lr = tc.lr0 * 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(t) / T));
        for (long r = 0; r < tc.batch_size; ++r)
            X.row(r) = sample_input_row(dist, data_rng).transpose();
        Eigen::MatrixXd Y;
        try {
            Y = forward_batch(teacher, X);
        } catch (const std::runtime_error&) {
            log.diverged = true;
            break;
        }
        const double loss = loss_and_grads(student, X, Y, grads, tc.precision);
        if (!std::isfinite(loss)) {
            log.diverged = true;
            break;
        }
        if (tc.momentum > 0.0) {
            vel.routing = tc.momentum * vel.routing + grads.routing;
            vel.bias = tc.momentum * vel.bias + grads.bias;
            for (int j = 0; j < student.config.m; ++j) {
                vel.A[j] = tc.momentum * vel.A[j] + grads.A[j];
                vel.B[j] = tc.momentum * vel.B[j] + grads.B[j];
            }
        }
        const MoEGrads& step = tc.momentum > 0.0 ? vel : grads;
        const double lr_bd =
            tc.input_scale_corrected_lr ? lr * static_cast<double>(student.config.d) : lr;
        student.routing -= lr_bd * step.routing;
        if (student.config.route_bias) student.bias -= lr * step.bias;
        for (int j = 0; j < student.config.m; ++j) {
            student.A[j] -= lr * step.A[j];
            student.B[j] -= lr_bd * step.B[j];
        }
        log.steps_run = t + 1;
        if (t % tc.eval_every == 0 || t == T - 1) {
            const double ev = eval_loss();
            log.records.push_back({t, lr, loss, ev});
            if (!std::isfinite(ev)) {
                log.diverged = true;
                break;
            }
        }
    }
    log.final_eval_loss = eval_loss();
    if (!std::isfinite(log.final_eval_loss)) log.diverged = true;
    return log;
}

void TrainLog::write_csv(std::ostream& os) const {
    os << "step,lr,train_loss,eval_loss\n";
    for (const auto& r : records)
        os << r.step << ',' << r.lr << ',' << r.train_loss << ',' << r.eval_loss << '\n';
}

nlohmann::json TrainLog::summary() const {
    return {{"final_eval_loss", final_eval_loss},
            {"teacher_norm_sq", teacher_norm_sq},
            {"normalized_final_loss",
             teacher_norm_sq > 0 ? final_eval_loss / teacher_norm_sq : 0.0},
            {"diverged", diverged},
            {"steps_run", steps_run},
            {"n_records", records.size()},
            {"seed", seed}};
}

std::vector<SweepRow> run_granularity_sweep(const MoELayer& teacher,
                                            const std::vector<SweepCell>& grid,
                                            const InputDistribution& dist,
                                            const TrainConfig& base,
                                            const std::vector<double>& lr_candidates) {
    std::vector<SweepRow> rows;
    for (std::size_t cell = 0; cell < grid.size(); ++cell) {
        SweepRow best;
        best.label = grid[cell].label;
        best.normalized_loss = std::numeric_limits<double>::infinity();
        best.diverged = true;
        for (std::size_t li = 0; li < lr_candidates.size(); ++li) {
            TrainConfig tc = base;
            tc.lr0 = lr_candidates[li];
            tc.seed = Rng(base.seed, 0x73776565u).split(cell * 64 + li).next_u64();
            MoELayer student = init_student(grid[cell].student, grid[cell].init_scale, tc.seed);
            TrainLog lg = train(teacher, student, dist, tc);
            const double norm = lg.diverged ? std::numeric_limits<double>::infinity()
                                            : lg.normalized_final_loss();
            if (norm < best.normalized_loss || (best.diverged && !lg.diverged)) {
                best.lr_chosen = tc.lr0;
                best.final_loss = lg.final_eval_loss;
                best.normalized_loss = norm;
                best.diverged = lg.diverged;
            }
        }
        rows.push_back(best);
    }
    return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& os) {
    os << "label,lr_chosen,final_loss,normalized_loss,diverged\n";
    for (const auto& r : rows)
        os << r.label << ',' << r.lr_chosen << ',' << r.final_loss << ','
           << r.normalized_loss << ',' << (r.diverged ? 1 : 0) << '\n';
}

} // namespace moelab
