#include "zonomip/miqp_bnb.hpp"

#include <algorithm>
#include <deque>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <mutex>
#include <set>
#include <stdexcept>
#include <thread>

namespace zonomip {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kRhsZero = 1e-12;
constexpr double kMembershipTol = 1e-6;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::vector<int> mask_to_list(const std::vector<std::uint64_t>& m, int count) {
    std::vector<int> out;
    for (int r = 0; r < count; ++r)
        if (m[r / 64] >> (r % 64) & 1u) out.push_back(r);
    return out;
}

std::vector<std::uint64_t> list_to_mask(const std::vector<int>& l, int count) {
    std::vector<std::uint64_t> m((count + 63) / 64, 0);
    for (int r : l) m[r / 64] |= std::uint64_t{1} << (r % 64);
    return m;
}

}  // namespace

void SolverSettings::validate() const {
    if (!(eps_a > 0.0) || !(eps_r > 0.0)) throw std::invalid_argument("SolverSettings: eps_a and eps_r must be positive");
    if (max_iter < 1) throw std::invalid_argument("SolverSettings: max_iter must be at least 1");
    if (!(max_time_s > 0.0)) throw std::invalid_argument("SolverSettings: max_time_s must be positive");
    if (threads < 1) throw std::invalid_argument("SolverSettings: threads must be at least 1");
}

std::string to_string(MiqpStatus s) {
    switch (s) {
        case MiqpStatus::optimal: return "optimal";
        case MiqpStatus::tol_reached: return "tol_reached";
        case MiqpStatus::time_limit: return "time_limit";
        case MiqpStatus::iter_limit: return "iter_limit";
        case MiqpStatus::infeasible: return "infeasible";
    }
    return "unknown";
}

bool converged(double j_plus, double j_minus, double eps_a, double eps_r) {
    if (!std::isfinite(j_plus) || !std::isfinite(j_minus)) return false;
    const double d = std::abs(j_plus - j_minus);
    return d < eps_a || d < eps_r * std::abs(j_plus);
}

double optimality_gap(double j_plus, double j_minus) {
    if (!std::isfinite(j_plus) || !std::isfinite(j_minus)) return kInf;
    const double d = std::abs(j_plus - j_minus);
    if (j_plus == 0.0) return d == 0.0 ? 0.0 : kInf;
    return d / std::abs(j_plus);
}

int Node::depth() const {
    int d = 0;
    for (const auto& r : regions) d += r.size() == 1 ? 1 : 0;
    return d;
}

bool Node::any_empty() const {
    return std::any_of(regions.begin(), regions.end(), [](const auto& r) { return r.empty(); });
}

void NodeStore::push(Node n) {
    if (std::isnan(n.bound)) throw std::invalid_argument("NodeStore: NaN bound");
    n.seq = next_seq_++;
    const auto key = std::make_pair(n.bound, n.seq);
    ordered_.emplace(key, std::move(n));
}

void NodeStore::push_top(Node n) {
    if (std::isnan(n.bound)) throw std::invalid_argument("NodeStore: NaN bound");
    n.seq = next_seq_++;
    lane_.push_back(std::move(n));
}

std::optional<Node> NodeStore::pop() {
    if (!lane_.empty()) {
        Node n = std::move(lane_.back());
        lane_.pop_back();
        return n;
    }
    if (ordered_.empty()) return std::nullopt;
    auto it = ordered_.begin();
    Node n = std::move(it->second);
    ordered_.erase(it);
    return n;
}

std::size_t NodeStore::prune(double j_plus) {
    const std::size_t before = size();
    ordered_.erase(ordered_.upper_bound({j_plus, std::numeric_limits<std::uint64_t>::max()}), ordered_.end());
    std::erase_if(lane_, [&](const Node& n) { return n.bound > j_plus; });
    return before - size();
}

double NodeStore::min_bound() const {
    double m = ordered_.empty() ? kInf : ordered_.begin()->first.first;
    for (const auto& n : lane_) m = std::min(m, n.bound);
    return m;
}

VectorXd NodeProblem::scatter(const VectorXd& z) const {
    VectorXd full = VectorXd::Zero(template_size);
    Index src = 0;
    for (std::size_t k = 0; k < kept.size(); ++k)
        for (Index i : kept[k]) full[template_offset[k] + i] = z[src++];
    return full;
}

double MiqpResult::average_qp_seconds() const {
    if (nodes.empty()) return 0.0;
    double s = 0.0;
    for (const auto& n : nodes) s += n.qp_seconds;
    return s / static_cast<double>(nodes.size());
}

MiqpSolver::MiqpSolver(const MultiStageMiqp& miqp, std::vector<RegionHrep> regions, const ReachTables& tables)
    : miqp_(&miqp), regions_(std::move(regions)), tables_(&tables) {
    const int nf = miqp.num_regions;
    if (nf < 1 || miqp.formulation == Formulation::convex)
        throw std::invalid_argument("MiqpSolver: problem has no region binaries");
    if (static_cast<int>(regions_.size()) != nf)
        throw std::invalid_argument("MiqpSolver: region H-representation count does not match the binaries");
    if (tables.num_regions() != nf) throw std::invalid_argument("MiqpSolver: reachability tables do not match the map");
    const int N = miqp.horizon();
    for (int k = 0; k <= N; ++k)
        if (miqp.layout[k].xi_b.size != nf) throw std::invalid_argument("MiqpSolver: stage without region binaries");
    masks_.resize(N + 1);
    for (int s = 0; s <= N; ++s)
        for (int r = 0; r < nf; ++r) masks_[s].push_back(list_to_mask(tables.region_set(s, r), nf));
    for (const auto& st : miqp.qp.stages) {
        std::vector<char> nn(st.size());
        for (Index i = 0; i < st.size(); ++i) nn[i] = st.lower[i] >= 0.0;
        nonneg_.push_back(std::move(nn));
    }
}

const MiqpSolver::Mask& MiqpSolver::reach_mask(int steps, int r) const { return masks_[steps][r]; }

Node MiqpSolver::root() const {
    Node n;
    const int N = horizon();
    std::vector<int> all(num_regions());
    for (int r = 0; r < num_regions(); ++r) all[r] = r;
    for (int k = 0; k <= N; ++k) n.regions.push_back(tables_->point ? tables_->point_set(k) : all);
    make_consistent(n);
    return n;
}

bool MiqpSolver::make_consistent(Node& n) const {
    const int N = horizon();
    const int nf = num_regions();
    if (static_cast<int>(n.regions.size()) != N + 1) throw std::invalid_argument("make_consistent: node has wrong horizon");
    std::vector<Mask> m;
    for (const auto& r : n.regions) m.push_back(list_to_mask(r, nf));
    const std::size_t words = m[0].size();
    bool changed = true;
    while (changed) {
        changed = false;
        for (int k = 0; k <= N; ++k) {
            Mask acc = m[k];
            for (int ko = 0; ko <= N; ++ko) {
                if (ko == k) continue;
                Mask uni(words, 0);
                for (int r : mask_to_list(m[ko], nf)) {
                    const auto& rm = reach_mask(std::abs(k - ko), r);
                    for (std::size_t w = 0; w < words; ++w) uni[w] |= rm[w];
                }
                for (std::size_t w = 0; w < words; ++w) acc[w] &= uni[w];
            }
            if (acc != m[k]) {
                m[k] = std::move(acc);
                changed = true;
            }
        }
    }
    bool ok = true;
    for (int k = 0; k <= N; ++k) {
        n.regions[k] = mask_to_list(m[k], nf);
        ok = ok && !n.regions[k].empty();
    }
    return ok;
}

std::vector<std::vector<char>> MiqpSolver::removed_binaries(const std::vector<std::vector<int>>& regions) const {
    const auto& qp = miqp_->qp;
    std::vector<std::vector<char>> removed;
    for (std::size_t k = 0; k < qp.stages.size(); ++k) {
        std::vector<char> rm(qp.stages[k].size(), 0);
        const auto& xb = miqp_->layout[k].xi_b;
        for (Index i = 0; i < xb.size; ++i) rm[xb.start + i] = 1;
        for (int r : regions[k]) {
            if (r < 0 || r >= num_regions()) throw std::invalid_argument("apply_binvars: region index out of range");
            rm[xb.start + r] = 0;
        }
        removed.push_back(std::move(rm));
    }
    return removed;
}

// Rows sum gamma_i z_i = 0 over nonnegative z_i with one-signed gamma force
// every z_i in the row to zero.
std::vector<std::vector<char>> MiqpSolver::eliminate(std::vector<std::vector<char>> removed) const {
    const auto& qp = miqp_->qp;
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t j = 0; j < qp.couplings.size(); ++j) {
            const auto& cp = qp.couplings[j];
            for (Index r = 0; r < cp.rows(); ++r) {
                if (std::abs(cp.c[r]) > kRhsZero) continue;
                int sign = 0;
                bool candidate = true, any = false;
                auto scan = [&](const MatrixXd& M, std::size_t stage) {
                    for (Index i = 0; i < M.cols() && candidate; ++i) {
                        if (removed[stage][i] || M(r, i) == 0.0) continue;
                        any = true;
                        const int s = M(r, i) > 0.0 ? 1 : -1;
                        if (sign == 0) sign = s;
                        if (s != sign || !nonneg_[stage][i]) candidate = false;
                    }
                };
                scan(cp.C, j);
                scan(cp.D, j + 1);
                if (!candidate || !any) continue;
                auto drop = [&](const MatrixXd& M, std::size_t stage) {
                    for (Index i = 0; i < M.cols(); ++i)
                        if (!removed[stage][i] && M(r, i) != 0.0) removed[stage][i] = 1;
                };
                drop(cp.C, j);
                drop(cp.D, j + 1);
                changed = true;
            }
        }
    }
    return removed;
}

NodeProblem MiqpSolver::apply_binvars(const Node& n) const {
    const auto& qp = miqp_->qp;
    if (n.regions.size() != qp.stages.size()) throw std::invalid_argument("apply_binvars: node has wrong horizon");
    const auto removed = eliminate(removed_binaries(n.regions));
    NodeProblem np;
    np.template_size = qp.num_variables();
    np.qp.constant = qp.constant;
    Index offset = 0;
    for (std::size_t k = 0; k < qp.stages.size(); ++k) {
        const auto& st = qp.stages[k];
        np.template_offset.push_back(offset);
        offset += st.size();
        std::vector<Index> keep;
        for (Index i = 0; i < st.size(); ++i)
            if (!removed[k][i]) keep.push_back(i);
        const Index m = static_cast<Index>(keep.size());
        QpStage out;
        out.P.resize(m);
        out.q.resize(m);
        out.lower.resize(m);
        out.upper.resize(m);
        for (Index i = 0; i < m; ++i) {
            out.P[i] = st.P[keep[i]];
            out.q[i] = st.q[keep[i]];
            out.lower[i] = st.lower[keep[i]];
            out.upper[i] = st.upper[keep[i]];
        }
        std::vector<Index> rows;
        for (Index r = 0; r < st.num_general(); ++r) {
            bool empty = true;
            for (Index i : keep)
                if (st.Gg(r, i) != 0.0) empty = false;
            if (!empty)
                rows.push_back(r);
            else if (st.wg[r] < -kRhsZero)
                np.infeasible = true;
        }
        out.Gg.resize(static_cast<Index>(rows.size()), m);
        out.wg.resize(static_cast<Index>(rows.size()));
        for (std::size_t r = 0; r < rows.size(); ++r) {
            for (Index i = 0; i < m; ++i) out.Gg(r, i) = st.Gg(rows[r], keep[i]);
            out.wg[r] = st.wg[rows[r]];
        }
        np.qp.stages.push_back(std::move(out));
        np.kept.push_back(std::move(keep));
    }
    for (std::size_t j = 0; j < qp.couplings.size(); ++j) {
        const auto& cp = qp.couplings[j];
        const auto& ka = np.kept[j];
        const auto& kb = np.kept[j + 1];
        std::vector<Index> rows;
        for (Index r = 0; r < cp.rows(); ++r) {
            bool empty = true;
            for (Index i : ka)
                if (cp.C(r, i) != 0.0) empty = false;
            for (Index i : kb)
                if (cp.D(r, i) != 0.0) empty = false;
            if (!empty)
                rows.push_back(r);
            else if (std::abs(cp.c[r]) > kRhsZero)
                np.infeasible = true;
        }
        QpCoupling out;
        const Index nr = static_cast<Index>(rows.size());
        out.C.resize(nr, static_cast<Index>(ka.size()));
        out.D.resize(nr, static_cast<Index>(kb.size()));
        out.c.resize(nr);
        for (Index r = 0; r < nr; ++r) {
            for (std::size_t i = 0; i < ka.size(); ++i) out.C(r, i) = cp.C(rows[r], ka[i]);
            for (std::size_t i = 0; i < kb.size(); ++i) out.D(r, i) = cp.D(rows[r], kb[i]);
            out.c[r] = cp.c[rows[r]];
        }
        np.qp.couplings.push_back(std::move(out));
    }
    return np;
}

Violation MiqpSolver::first_cons_violation(const Node& n, const VectorXd& z_full) const {
    Violation v;
    const auto y = extract_positions(*miqp_, z_full);
    for (int k = 0; k <= horizon(); ++k) {
        const auto& rk = n.regions[k];
        if (rk.size() == 1) {
            v.regions.push_back(rk[0]);
            continue;
        }
        int found = -1;
        for (int r : rk)
            if (regions_[r].contains(y[k], kMembershipTol)) {
                found = r;
                break;
            }
        if (found < 0) {
            v.violated = true;
            v.k = k;
            return v;
        }
        v.regions.push_back(found);
    }
    return v;
}

double MiqpSolver::approx_cost(const VectorXd& z_full, const std::vector<int>& regions) const {
    const int N = horizon();
    if (static_cast<int>(regions.size()) != N + 1) throw std::invalid_argument("approx_cost: need one region per stage");
    std::vector<std::vector<int>> sets;
    for (int r : regions) sets.push_back({r});
    const auto removed = eliminate(removed_binaries(sets));
    VectorXd z = z_full;
    Index offset = 0;
    for (int k = 0; k <= N; ++k) {
        const auto& xb = miqp_->layout[k].xi_b;
        for (Index i = 0; i < static_cast<Index>(removed[k].size()); ++i)
            if (removed[k][i]) z[offset + i] = 0.0;
        z.segment(offset + xb.start, xb.size).setZero();
        z[offset + xb.start + regions[k]] = 1.0;
        offset += miqp_->qp.stages[k].size();
    }
    return qp_objective(miqp_->qp, z);
}

std::vector<Node> MiqpSolver::branch_at_k(const Node& n, const VectorXd& z_full, int k) const {
    if (k < 0 || k > horizon()) throw std::invalid_argument("branch_at_k: stage out of range");
    const auto& rk = n.regions[k];
    if (rk.size() < 2) throw std::invalid_argument("branch_at_k: stage has a single candidate");
    const VectorXd xi = extract_binaries(*miqp_, z_full, k);
    int r_max = rk[0];
    for (int r : rk)
        if (xi[r] > xi[r_max]) r_max = r;
    Node b = n, rest = n;
    b.regions[k] = {r_max};
    rest.regions[k].erase(std::find(rest.regions[k].begin(), rest.regions[k].end(), r_max));
    std::vector<Node> out;
    if (make_consistent(b)) out.push_back(std::move(b));
    if (make_consistent(rest)) out.push_back(std::move(rest));
    return out;
}

std::vector<Node> MiqpSolver::branch_mf(const Node& n, const VectorXd& z_full) const {
    int kb = -1;
    double best = -1.0;
    for (int k = 0; k <= horizon(); ++k) {
        if (n.regions[k].size() < 2) continue;
        const VectorXd xi = extract_binaries(*miqp_, z_full, k);
        double f = 0.0;
        for (int r : n.regions[k]) f = std::max(f, std::abs(xi[r] - std::round(xi[r])));
        if (f > best) {
            best = f;
            kb = k;
        }
    }
    if (kb < 0) throw std::logic_error("branch_mf: every stage already has a single candidate");
    return branch_at_k(n, z_full, kb);
}

std::vector<Node> MiqpSolver::warm_start_nodes(const std::vector<int>& previous) const {
    const int N = horizon();
    if (static_cast<int>(previous.size()) != N + 1)
        throw std::invalid_argument("warm_start_nodes: need one previous region per stage");
    for (int r : previous)
        if (r < 0 || r >= num_regions()) throw std::invalid_argument("warm_start_nodes: region index out of range");
    // The node that keeps the previous terminal region comes first.
    std::vector<int> terminal = tables_->region_set(1, previous[N]);
    std::stable_partition(terminal.begin(), terminal.end(), [&](int r) { return r == previous[N]; });
    std::vector<Node> out;
    for (int ri : terminal) {
        Node n;
        n.warm = true;
        for (int k = 0; k < N; ++k) n.regions.push_back({previous[k + 1]});
        n.regions.push_back({ri});
        if (tables_->point)
            for (int k = 0; k <= N; ++k)
                if (!tables_->point_reachable(k, n.regions[k][0])) n.regions[k].clear();
        if (!n.any_empty() && make_consistent(n)) out.push_back(std::move(n));
    }
    return out;
}

namespace {

struct NodeEvaluation {
    bool solved = false;
    bool leaf = false;
    double j = kInf;
    double child_bound = kInf;
    VectorXd z;
    std::vector<int> leaf_regions;
    std::optional<Node> rounded;
    double rounded_cost = kInf;
    std::vector<Node> children;
    NodeStats stats;
    bool qp_failed = false;
    bool warm = false;
};

}  // namespace

MiqpResult MiqpSolver::solve(const SolverSettings& settings, const std::optional<std::vector<int>>& warm) const {
    settings.validate();
    const auto t0 = Clock::now();
    const int N = horizon();
    MiqpResult result;

    std::mutex mtx;
    std::condition_variable cv;
    NodeStore store;
    std::multiset<double> in_flight;
    bool stop = false;
    enum class Reason { none, exhausted, converged, iter, time } reason = Reason::none;
    std::exception_ptr error;

    Node root_node = root();
    if (root_node.any_empty()) {
        result.status = MiqpStatus::infeasible;
        result.seconds = seconds_since(t0);
        return result;
    }
    // Warm nodes run one at a time ahead of the root until one of them gives
    // an incumbent. The root's subtree covers every warm node, so the rest are
    // dropped.
    std::deque<Node> warm_queue;
    if (settings.warm_start && warm)
        for (auto& n : warm_start_nodes(*warm)) warm_queue.push_back(std::move(n));
    auto next_warm = [&] {
        if (warm_queue.empty()) return;
        store.push_top(std::move(warm_queue.front()));
        warm_queue.pop_front();
    };
    store.push(std::move(root_node));
    next_warm();

    // Every value this returns is a valid bound, so the largest seen is kept.
    double best_lower = -kInf;
    auto j_minus = [&] {
        double m = store.min_bound();
        if (!in_flight.empty()) m = std::min(m, *in_flight.begin());
        if (std::isinf(m) && m > 0) m = result.j_plus;
        best_lower = std::max(best_lower, m);
        return best_lower;
    };

    auto evaluate = [&](const Node& node) {
        NodeEvaluation e;
        e.warm = node.warm;
        e.stats.depth = node.depth();
        const auto np = apply_binvars(node);
        if (np.infeasible) return e;
        const auto t_qp = Clock::now();
        const auto res = solve_qp(np.qp, settings.qp);
        e.stats.qp_seconds = seconds_since(t_qp);
        e.stats.qp_iterations = res.stats.iterations;
        e.stats.status = res.status;
        e.stats.objective = res.objective;
        if (res.status != QpStatus::optimal) {
            e.qp_failed = res.status != QpStatus::infeasible;
            return e;
        }
        e.solved = true;
        e.j = res.objective;
        // Objective minus the complementarity gap bounds the QP optimum from below.
        e.child_bound = std::max(e.j - std::max(0.0, res.iterate.s.dot(res.iterate.lambda)), node.bound);
        e.z = np.scatter(res.iterate.z);
        if (node.depth() == N + 1) {
            e.leaf = true;
            for (const auto& r : node.regions) e.leaf_regions.push_back(r[0]);
            return e;
        }
        const auto v = first_cons_violation(node, e.z);
        if (v.violated) {
            e.children = branch_at_k(node, e.z, v.k);
            return e;
        }
        Node rounded;
        for (int r : v.regions) rounded.regions.push_back({r});
        if (make_consistent(rounded)) {
            e.rounded_cost = approx_cost(e.z, v.regions);
            e.rounded = std::move(rounded);
        }
        e.children = branch_mf(node, e.z);
        return e;
    };

    auto integrate = [&](NodeEvaluation& e) {
        result.nodes.push_back(e.stats);
        if (e.qp_failed) ++result.qp_failures;
        if (e.warm) {
            if (e.solved && e.leaf && e.j < result.j_plus)
                warm_queue.clear();
            else
                next_warm();
        }
        if (!e.solved || e.j > result.j_plus) return;
        if (e.leaf) {
            if (e.j < result.j_plus) {
                result.j_plus = e.j;
                result.z = std::move(e.z);
                result.regions = std::move(e.leaf_regions);
                store.prune(result.j_plus);
            }
            return;
        }
        if (e.rounded && e.rounded_cost < result.j_plus) {
            e.rounded->bound = e.child_bound;
            store.push_top(std::move(*e.rounded));
        }
        for (auto& c : e.children) {
            c.bound = e.child_bound;
            store.push(std::move(c));
        }
    };

    auto worker = [&] {
        std::unique_lock<std::mutex> lock(mtx);
        while (true) {
            cv.wait(lock, [&] { return stop || !store.empty() || in_flight.empty(); });
            if (stop) return;
            if (store.empty() && in_flight.empty()) {
                reason = Reason::exhausted;
            } else if (converged(result.j_plus, j_minus(), settings.eps_a, settings.eps_r)) {
                reason = Reason::converged;
            } else if (result.iterations >= settings.max_iter) {
                reason = Reason::iter;
            } else if (seconds_since(t0) > settings.max_time_s &&
                       !(settings.require_incumbent && std::isinf(result.j_plus))) {
                reason = Reason::time;
            }
            if (reason != Reason::none) {
                stop = true;
                cv.notify_all();
                return;
            }
            if (store.empty()) continue;
            Node node = *store.pop();
            if (node.bound > result.j_plus) continue;
            ++result.iterations;
            const auto flight = in_flight.insert(node.bound);
            lock.unlock();
            NodeEvaluation e;
            try {
                e = evaluate(node);
            } catch (...) {
                lock.lock();
                if (!error) error = std::current_exception();
                in_flight.erase(flight);
                stop = true;
                cv.notify_all();
                return;
            }
            lock.lock();
            in_flight.erase(flight);
            integrate(e);
            result.bound_history.emplace_back(result.j_plus, j_minus());
            cv.notify_all();
        }
    };

    if (settings.threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < settings.threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (error) std::rethrow_exception(error);

    const bool have = std::isfinite(result.j_plus);
    switch (reason) {
        case Reason::exhausted:
            result.status = have ? MiqpStatus::optimal : MiqpStatus::infeasible;
            result.j_minus = have ? std::max(best_lower, result.j_plus) : kInf;
            break;
        case Reason::converged:
            result.status = MiqpStatus::tol_reached;
            result.j_minus = j_minus();
            break;
        case Reason::iter:
            result.status = MiqpStatus::iter_limit;
            result.j_minus = j_minus();
            break;
        case Reason::time:
        case Reason::none:
            result.status = MiqpStatus::time_limit;
            result.j_minus = j_minus();
            break;
    }
    result.gap = optimality_gap(result.j_plus, result.j_minus);
    result.seconds = seconds_since(t0);
    return result;
}

MiqpResult solve_miqp(const MultiStageMiqp& miqp, const std::vector<RegionHrep>& regions, const ReachTables& tables,
                      const SolverSettings& settings, const std::optional<std::vector<int>>& warm) {
    return MiqpSolver(miqp, regions, tables).solve(settings, warm);
}

}  // namespace zonomip
