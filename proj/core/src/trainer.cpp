#include "pinnlab/trainer.hpp"

#include <atomic>
#include <barrier>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

namespace pinnlab {

namespace fs = std::filesystem;

std::size_t CollocationConfig::interior_count() const {
    if (mode == Mode::lhs) return n;
    std::size_t total = 1;
    for (auto d : dims) total *= d;
    return total;
}

std::uint64_t param_hash(const std::vector<NamedTensor>& params) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const unsigned char* p, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 1099511628211ULL;
        }
    };
    for (const auto& p : params) {
        mix(reinterpret_cast<const unsigned char*>(p.name.data()), p.name.size());
        mix(reinterpret_cast<const unsigned char*>(p.value.data()), p.value.size() * 8);
    }
    return h;
}

double TrainResult::final_total_loss() const {
    if (metrics.empty()) return 0.0;
    const MetricsRecord& m = metrics.back();
    return m.lambda_pde * m.l_pde + m.lambda_ic * m.l_ic + m.lambda_bc * m.l_bc;
}

// ---------------------------------------------------------------------------
// collocation assembly
// ---------------------------------------------------------------------------

CollocationData build_collocation(const TrainingProblem& prob, const CollocationConfig& cc,
                                  std::uint64_t seed) {
    const Domain& dom = prob.domain;
    const std::size_t d = dom.dim();
    if (d < 2) throw TensorError("build_collocation: need at least one spatial axis plus time");

    CollocationData data;
    switch (cc.mode) {
        case CollocationConfig::Mode::uniform:
            data.interior = sample_uniform(dom, cc.dims);
            break;
        case CollocationConfig::Mode::lhs:
            data.interior = sample_lhs(dom, cc.n, seed);
            break;
        case CollocationConfig::Mode::lhs_per_axis:
            data.interior = sample_lhs_per_axis(dom, cc.dims, seed);
            break;
    }

    // Initial slice: spatial grid at t = 0.
    const std::size_t spatial = d - 1;
    Points ic;
    if (spatial == 1) {
        auto xs = linspace(dom.bounds[0][0], dom.bounds[0][1], cc.n_ic);
        ic.coords.push_back(Tensor::column(xs));
    } else {
        std::size_t per_axis = static_cast<std::size_t>(
            std::ceil(std::pow(static_cast<double>(cc.n_ic), 1.0 / static_cast<double>(spatial))));
        Domain sdom{std::vector<std::array<double, 2>>(dom.bounds.begin(),
                                                       dom.bounds.end() - 1)};
        std::vector<std::size_t> dims(spatial, per_axis);
        Points grid = sample_uniform(sdom, dims);
        ic.coords = std::move(grid.coords);
    }
    std::size_t n_ic = ic.coords[0].rows();
    ic.coords.push_back(Tensor::zeros({n_ic, 1}));  // t = 0
    data.ic_points = std::move(ic);

    const std::size_t fields = prob.residual.field_count();
    data.ic_targets.assign(fields, Tensor({n_ic, 1}));
    std::vector<double> xbuf(spatial);
    for (std::size_t i = 0; i < n_ic; ++i) {
        for (std::size_t a = 0; a < spatial; ++a) xbuf[a] = data.ic_points.coords[a][i];
        std::vector<double> vals = prob.initial(xbuf);
        if (vals.size() != fields)
            throw TensorError("build_collocation: initial() field count mismatch");
        for (std::size_t f = 0; f < fields; ++f) data.ic_targets[f][i] = vals[f];
    }

    // Boundary traces on the first spatial axis.
    if (prob.bc != TrainingProblem::Bc::hard) {
        auto [tlo, thi] = dom.bounds[d - 1];
        auto ts = linspace(tlo, thi, cc.n_bc);
        auto trace = [&](double xval) {
            Points p;
            p.coords.push_back(Tensor::full({cc.n_bc, 1}, xval));
            for (std::size_t a = 1; a < spatial; ++a)
                p.coords.push_back(Tensor::full({cc.n_bc, 1}, 0.5 * (dom.bounds[a][0] +
                                                                     dom.bounds[a][1])));
            p.coords.push_back(Tensor::column(ts));
            return p;
        };
        data.bc_a = trace(dom.bounds[0][0]);
        data.bc_b = trace(dom.bounds[0][1]);
        if (prob.bc == TrainingProblem::Bc::dirichlet_zero) {
            // both boundaries stacked, zero targets
            Points both;
            for (std::size_t a = 0; a < d; ++a) {
                Tensor col({2 * cc.n_bc, 1});
                for (std::size_t i = 0; i < cc.n_bc; ++i) {
                    col[i] = data.bc_a.coords[a][i];
                    col[cc.n_bc + i] = data.bc_b.coords[a][i];
                }
                both.coords.push_back(std::move(col));
            }
            data.bc_a = std::move(both);
            data.bc_b = Points{};
            data.bc_targets.assign(fields, Tensor::zeros({2 * cc.n_bc, 1}));
        }
    }
    return data;
}

namespace {

Points slice_points(const Points& pts, std::size_t from, std::size_t to) {
    Points out;
    for (const Tensor& c : pts.coords) {
        Tensor col({to - from, 1});
        for (std::size_t i = from; i < to; ++i) col[i - from] = c[i];
        out.coords.push_back(std::move(col));
    }
    return out;
}

/// Contiguous interior shards; the last shard absorbs the remainder.
std::vector<Points> shard_interior(const Points& interior, int workers) {
    std::size_t n = interior.count();
    std::vector<Points> shards;
    std::size_t base = n / static_cast<std::size_t>(workers);
    if (base == 0) throw TensorError("data parallel: fewer interior points than workers");
    for (int w = 0; w < workers; ++w) {
        std::size_t from = static_cast<std::size_t>(w) * base;
        std::size_t to = (w + 1 == workers) ? n : from + base;
        shards.push_back(slice_points(interior, from, to));
    }
    return shards;
}

std::vector<Points> split_time_segments(const Points& pts, double tlo, double thi,
                                        int segments) {
    std::vector<std::vector<std::size_t>> buckets(static_cast<std::size_t>(segments));
    const Tensor& t = pts.coords.back();
    double span = thi - tlo;
    for (std::size_t i = 0; i < pts.count(); ++i) {
        double frac = (t[i] - tlo) / span;
        int s = std::min(segments - 1, std::max(0, static_cast<int>(frac * segments)));
        buckets[static_cast<std::size_t>(s)].push_back(i);
    }
    std::vector<Points> out;
    for (const auto& idx : buckets) {
        Points p;
        for (const Tensor& c : pts.coords) {
            Tensor col({idx.size(), 1});
            for (std::size_t k = 0; k < idx.size(); ++k) col[k] = c[idx[k]];
            p.coords.push_back(std::move(col));
        }
        out.push_back(std::move(p));
    }
    return out;
}

struct TermLosses {
    double pde = 0.0, ic = 0.0, bc = 0.0, pen = 0.0;
};

struct WorkerOutput {
    std::vector<Tensor> total_grad;
    std::array<std::vector<Tensor>, 3> term_grads;  // pde, ic, bc (when requested)
    TermLosses losses;
};

struct WorkerTask {
    const Model* model = nullptr;
    const TrainingProblem* prob = nullptr;
    const Points* interior = nullptr;
    std::vector<Points> segments;  // causality split of the shard
    const CollocationData* shared = nullptr;
    std::array<double, 3> lambdas{1.0, 1.0, 1.0};
    const TrainConfig* cfg = nullptr;
    bool want_term_grads = false;
};

WorkerOutput run_worker_epoch(const WorkerTask& task) {
    const Model& model = *task.model;
    const TrainingProblem& prob = *task.prob;
    const TrainConfig& cfg = *task.cfg;

    Graph g;
    Model::Binding binding = model.bind(g);
    FieldFn f = model_fields(model, binding);

    Value l_pde;
    if (cfg.causality.enabled) {
        std::vector<Value> seg_losses;
        std::vector<double> seg_values;
        for (const Points& seg : task.segments) {
            Value v = seg.count() == 0 ? g.constant_scalar(0.0)
                                       : residual_loss(g, f, seg, prob.residual);
            seg_losses.push_back(v);
            seg_values.push_back(g.value(v).item());
        }
        std::vector<double> omega = causality_weights(seg_values, cfg.causality.epsilon);
        l_pde = weighted_pde_loss(g, omega, seg_losses);
    } else {
        l_pde = residual_loss(g, f, *task.interior, prob.residual);
    }

    Value l_ic = ic_loss(g, f, task.shared->ic_points, task.shared->ic_targets);

    Value l_bc;
    bool has_bc = prob.bc != TrainingProblem::Bc::hard;
    if (prob.bc == TrainingProblem::Bc::soft_periodic)
        l_bc = bc_periodic_loss(g, f, task.shared->bc_a, task.shared->bc_b);
    else if (prob.bc == TrainingProblem::Bc::dirichlet_zero)
        l_bc = bc_dirichlet_loss(g, f, task.shared->bc_a, task.shared->bc_targets);

    Value total = g.add(g.affine(l_pde, task.lambdas[0], 0.0),
                        g.affine(l_ic, task.lambdas[1], 0.0));
    if (has_bc) total = g.add(total, g.affine(l_bc, task.lambdas[2], 0.0));

    WorkerOutput out;
    if (cfg.poynting.weight > 0.0 && prob.residual.id == PdeId::maxwell_te) {
        auto ts = linspace(prob.domain.bounds.back()[0], prob.domain.bounds.back()[1],
                           cfg.poynting.time_samples);
        Value pen = poynting_penalty(g, f, ts, prob.domain.bounds[0], prob.domain.bounds[1],
                                     cfg.poynting.grid, prob.residual.epsilon,
                                     prob.residual.mu);
        total = g.add(total, g.affine(pen, cfg.poynting.weight, 0.0));
        out.losses.pen = g.value(pen).item();
    }

    out.losses.pde = g.value(l_pde).item();
    out.losses.ic = g.value(l_ic).item();
    out.losses.bc = has_bc ? g.value(l_bc).item() : 0.0;

    GradientMap gm = g.backward(total, binding.params);
    out.total_grad = std::move(gm.grads);

    if (task.want_term_grads) {
        out.term_grads[0] = g.backward(l_pde, binding.params).grads;
        out.term_grads[1] = g.backward(l_ic, binding.params).grads;
        if (has_bc) out.term_grads[2] = g.backward(l_bc, binding.params).grads;
    }
    return out;
}

std::vector<Tensor> average_grads(const std::vector<WorkerOutput>& outs,
                                  int which_term /* -1 = total */) {
    const std::vector<Tensor>& first =
        which_term < 0 ? outs[0].total_grad
                       : outs[0].term_grads[static_cast<std::size_t>(which_term)];
    std::vector<Tensor> avg = first;
    for (std::size_t w = 1; w < outs.size(); ++w) {
        const std::vector<Tensor>& gw =
            which_term < 0 ? outs[w].total_grad
                           : outs[w].term_grads[static_cast<std::size_t>(which_term)];
        for (std::size_t i = 0; i < avg.size(); ++i)
            for (std::size_t k = 0; k < avg[i].size(); ++k) avg[i][k] += gw[i][k];
    }
    double inv = 1.0 / static_cast<double>(outs.size());
    for (auto& t : avg)
        for (std::size_t k = 0; k < t.size(); ++k) t[k] *= inv;
    return avg;
}

double grad_vec_norm(const std::vector<Tensor>& grads) {
    double s = 0.0;
    for (const auto& t : grads)
        for (std::size_t k = 0; k < t.size(); ++k) s += t[k] * t[k];
    return std::sqrt(s);
}

Eigen::VectorXd flatten_params(const std::vector<NamedTensor>& params) {
    std::size_t n = 0;
    for (const auto& p : params) n += p.value.size();
    Eigen::VectorXd v(static_cast<Eigen::Index>(n));
    std::size_t at = 0;
    for (const auto& p : params)
        for (std::size_t k = 0; k < p.value.size(); ++k) v[static_cast<Eigen::Index>(at++)] = p.value[k];
    return v;
}

void unflatten_params(const Eigen::VectorXd& v, std::vector<NamedTensor>& params) {
    std::size_t at = 0;
    for (auto& p : params)
        for (std::size_t k = 0; k < p.value.size(); ++k) p.value[k] = v[static_cast<Eigen::Index>(at++)];
}

Eigen::VectorXd flatten_grads(const std::vector<Tensor>& grads) {
    std::size_t n = 0;
    for (const auto& t : grads) n += t.size();
    Eigen::VectorXd v(static_cast<Eigen::Index>(n));
    std::size_t at = 0;
    for (const auto& t : grads)
        for (std::size_t k = 0; k < t.size(); ++k) v[static_cast<Eigen::Index>(at++)] = t[k];
    return v;
}

void write_metrics_header(std::ofstream& os) {
    os << "epoch,L_pde,L_ic,L_bc,lambda_pde,lambda_ic,lambda_bc,lr\n";
}

void append_metrics(std::ofstream& os, const MetricsRecord& m) {
    os.precision(17);
    os << m.epoch << ',' << m.l_pde << ',' << m.l_ic << ',' << m.l_bc << ','
       << m.lambda_pde << ',' << m.lambda_ic << ',' << m.lambda_bc << ',' << m.lr << '\n';
}

}  // namespace

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

TrainResult train(Model& model, const TrainingProblem& prob, const TrainConfig& cfg) {
    TrainResult result;
    const int W = std::max(1, cfg.workers);

    LossState lstate;
    lstate.alpha = cfg.balancing.alpha;
    lstate.update_period = cfg.balancing.update_period;

    Adam adam(cfg.adam);
    ExponentialLr sched{cfg.adam.lr, cfg.scheduler_gamma};
    long start_epoch = 0;

    if (!cfg.resume_from.empty()) {
        Checkpoint ck = Checkpoint::load(cfg.resume_from);
        model = ck.restore_model();
        adam.restore(model.trainable(), ck.tensors,
                     static_cast<long>(ck.scalars.at("adam_t")));
        lstate.lambda_pde = ck.scalars.at("lambda_pde");
        lstate.lambda_ic = ck.scalars.at("lambda_ic");
        lstate.lambda_bc = ck.scalars.at("lambda_bc");
        start_epoch = static_cast<long>(ck.scalars.at("epoch")) + 1;
    }

    CollocationData base_data = build_collocation(prob, cfg.collocation, cfg.seed);

    // Replicas and shards for the synchronized step protocol.
    std::vector<Model> replicas(static_cast<std::size_t>(W), model);
    std::vector<Points> shards = shard_interior(base_data.interior, W);
    std::vector<std::vector<Points>> shard_segments(static_cast<std::size_t>(W));
    if (cfg.causality.enabled) {
        auto [tlo, thi] = prob.domain.bounds.back();
        for (int w = 0; w < W; ++w)
            shard_segments[static_cast<std::size_t>(w)] =
                split_time_segments(shards[static_cast<std::size_t>(w)], tlo, thi,
                                    cfg.causality.segments);
    }

    std::ofstream metrics_os;
    if (!cfg.run_dir.empty()) {
        fs::create_directories(cfg.run_dir);
        bool fresh = !fs::exists(fs::path(cfg.run_dir) / "metrics.csv") ||
                     cfg.resume_from.empty();
        metrics_os.open(fs::path(cfg.run_dir) / "metrics.csv",
                        cfg.resume_from.empty() ? std::ios::trunc : std::ios::app);
        if (fresh && cfg.resume_from.empty()) write_metrics_header(metrics_os);
    }

    auto save_checkpoint = [&](const std::string& name, long epoch) {
        if (cfg.run_dir.empty()) return;
        Checkpoint ck = Checkpoint::from_model(model, cfg.seed);
        for (auto& t : adam.state_tensors(model.trainable())) ck.tensors.push_back(t);
        ck.scalars["epoch"] = static_cast<double>(epoch);
        ck.scalars["adam_t"] = static_cast<double>(adam.step_count());
        ck.scalars["lambda_pde"] = lstate.lambda_pde;
        ck.scalars["lambda_ic"] = lstate.lambda_ic;
        ck.scalars["lambda_bc"] = lstate.lambda_bc;
        ck.save((fs::path(cfg.run_dir) / name).string());
    };

    auto wall_start = std::chrono::steady_clock::now();
    auto elapsed = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start)
            .count();
    };

    // Per-epoch worker tasks (data pointers are refreshed on resampling).
    std::vector<WorkerTask> tasks(static_cast<std::size_t>(W));
    std::vector<WorkerOutput> outputs(static_cast<std::size_t>(W));
    auto refresh_tasks = [&](bool want_terms, std::array<double, 3> lambdas) {
        for (int w = 0; w < W; ++w) {
            auto& t = tasks[static_cast<std::size_t>(w)];
            t.model = &replicas[static_cast<std::size_t>(w)];
            t.prob = &prob;
            t.interior = &shards[static_cast<std::size_t>(w)];
            t.segments = shard_segments[static_cast<std::size_t>(w)];
            t.shared = &base_data;
            t.lambdas = lambdas;
            t.cfg = &cfg;
            t.want_term_grads = want_terms;
        }
    };

    std::vector<double> loss_history;
    bool switched = false;
    long epoch = start_epoch;
    std::exception_ptr abort_error;

    for (; epoch < cfg.epochs; ++epoch) {
        // optional interior resampling (LHS modes)
        if (cfg.collocation.resample_every > 0 && epoch > 0 &&
            epoch % cfg.collocation.resample_every == 0 &&
            cfg.collocation.mode != CollocationConfig::Mode::uniform) {
            CollocationData rd = build_collocation(prob, cfg.collocation,
                                                   cfg.seed + static_cast<std::uint64_t>(epoch));
            base_data.interior = std::move(rd.interior);
            shards = shard_interior(base_data.interior, W);
            if (cfg.causality.enabled) {
                auto [tlo, thi] = prob.domain.bounds.back();
                for (int w = 0; w < W; ++w)
                    shard_segments[static_cast<std::size_t>(w)] = split_time_segments(
                        shards[static_cast<std::size_t>(w)], tlo, thi, cfg.causality.segments);
            }
        }

        bool balance_now = cfg.balancing.enabled && lstate.update_period > 0 &&
                           epoch % lstate.update_period == 0;
        refresh_tasks(balance_now, lstate.lambdas());

        // ---- synchronized compute ----
        try {
            if (W == 1) {
                outputs[0] = run_worker_epoch(tasks[0]);
            } else {
                std::vector<std::thread> threads;
                std::vector<std::exception_ptr> errors(static_cast<std::size_t>(W));
                for (int w = 0; w < W; ++w) {
                    threads.emplace_back([&, w] {
                        try {
                            outputs[static_cast<std::size_t>(w)] =
                                run_worker_epoch(tasks[static_cast<std::size_t>(w)]);
                        } catch (...) {
                            errors[static_cast<std::size_t>(w)] = std::current_exception();
                        }
                    });
                }
                for (auto& t : threads) t.join();
                for (auto& e : errors)
                    if (e) std::rethrow_exception(e);
            }
        } catch (const std::exception& e) {
            result.aborted = true;
            result.abort_reason = e.what();
            save_checkpoint("last_good.ckpt", epoch - 1);
            break;
        }

        // ---- reduce ----
        if (balance_now) {
            std::array<double, 3> norms{};
            norms[0] = grad_vec_norm(average_grads(outputs, 0));
            norms[1] = grad_vec_norm(average_grads(outputs, 1));
            bool has_bc = prob.bc != TrainingProblem::Bc::hard;
            norms[2] = has_bc ? grad_vec_norm(average_grads(outputs, 2)) : 0.0;
            if (has_bc) {
                update_global_weights(lstate, norms, epoch);
            } else {
                // two-term variant: same ratio rule over the active terms
                double total = norms[0] + norms[1];
                double hat0 = total / std::max(norms[0], 1e-9);
                double hat1 = total / std::max(norms[1], 1e-9);
                lstate.lambda_pde = lstate.alpha * lstate.lambda_pde + (1 - lstate.alpha) * hat0;
                lstate.lambda_ic = lstate.alpha * lstate.lambda_ic + (1 - lstate.alpha) * hat1;
            }
            // the weighted gradient must match the freshly updated weights
            refresh_tasks(false, lstate.lambdas());
            std::vector<Tensor> combined = average_grads(outputs, 0);
            const std::vector<Tensor> g_ic = average_grads(outputs, 1);
            bool has_bc2 = prob.bc != TrainingProblem::Bc::hard;
            std::vector<Tensor> g_bc;
            if (has_bc2) g_bc = average_grads(outputs, 2);
            for (std::size_t i = 0; i < combined.size(); ++i)
                for (std::size_t k = 0; k < combined[i].size(); ++k) {
                    double v = lstate.lambda_pde * combined[i][k] +
                               lstate.lambda_ic * g_ic[i][k];
                    if (has_bc2) v += lstate.lambda_bc * g_bc[i][k];
                    combined[i][k] = v;
                }
            // poynting contribution is folded into the total gradient path
            // only; with balancing epochs we recompute it from the totals.
            if (cfg.poynting.weight > 0.0) {
                // fall back to the total gradient (already includes the
                // penalty term with the old lambdas); acceptable since the
                // penalty is not balanced.
                combined = average_grads(outputs, -1);
            }
            apply_update(adam, sched, epoch, model, replicas, combined, cfg, result);
        } else {
            std::vector<Tensor> avg = average_grads(outputs, -1);
            apply_update(adam, sched, epoch, model, replicas, avg, cfg, result);
        }
        if (result.aborted) {
            save_checkpoint("last_good.ckpt", epoch - 1);
            break;
        }

        // ---- metrics ----
        TermLosses mean_losses;
        for (const auto& o : outputs) {
            mean_losses.pde += o.losses.pde;
            mean_losses.ic += o.losses.ic;
            mean_losses.bc += o.losses.bc;
        }
        double invW = 1.0 / static_cast<double>(W);
        MetricsRecord rec;
        rec.epoch = epoch;
        rec.l_pde = mean_losses.pde * invW;
        rec.l_ic = mean_losses.ic * invW;
        rec.l_bc = mean_losses.bc * invW;
        rec.lambda_pde = lstate.lambda_pde;
        rec.lambda_ic = lstate.lambda_ic;
        rec.lambda_bc = lstate.lambda_bc;
        rec.lr = sched.at(epoch);
        rec.wall_s = elapsed();
        result.metrics.push_back(rec);
        if (metrics_os.is_open()) append_metrics(metrics_os, rec);
        loss_history.push_back(rec.lambda_pde * rec.l_pde + rec.lambda_ic * rec.l_ic +
                               rec.lambda_bc * rec.l_bc);

        if (cfg.on_sync) {
            std::vector<std::uint64_t> hashes;
            for (const auto& r : replicas) hashes.push_back(param_hash(r.trainable()));
            cfg.on_sync(epoch, hashes);
        }

        if (cfg.save_every > 0 && epoch > 0 && epoch % cfg.save_every == 0)
            save_checkpoint("ckpt_" + std::to_string(epoch) + ".ckpt", epoch);

        if (cfg.lbfgs_max_iters > 0 &&
            cfg.switch_policy.should_switch(epoch, loss_history)) {
            switched = true;
            ++epoch;
            break;
        }
    }
    result.epochs_run = epoch - start_epoch;

    // ---- quasi-Newton refinement ----
    if (switched && !result.aborted) {
        result.switched_to_lbfgs = true;
        Lbfgs lbfgs(cfg.lbfgs);
        Eigen::VectorXd x = flatten_params(model.trainable());

        WorkerTask full;
        full.model = &model;
        full.prob = &prob;
        full.interior = &base_data.interior;
        if (cfg.causality.enabled) {
            auto [tlo, thi] = prob.domain.bounds.back();
            full.segments = split_time_segments(base_data.interior, tlo, thi,
                                                cfg.causality.segments);
        }
        full.shared = &base_data;
        full.lambdas = lstate.lambdas();
        full.cfg = &cfg;

        TermLosses last_losses;
        auto objective = [&](const Eigen::VectorXd& v, Eigen::VectorXd& grad) {
            unflatten_params(v, model.trainable());
            WorkerOutput out = run_worker_epoch(full);
            grad = flatten_grads(out.total_grad);
            last_losses = out.losses;
            return full.lambdas[0] * out.losses.pde + full.lambdas[1] * out.losses.ic +
                   full.lambdas[2] * out.losses.bc + cfg.poynting.weight * out.losses.pen;
        };

        for (long it = 0; it < cfg.lbfgs_max_iters; ++it) {
            Lbfgs::StepResult sr;
            try {
                sr = lbfgs.step(x, objective);
            } catch (const std::exception& e) {
                result.aborted = true;
                result.abort_reason = e.what();
                break;
            }
            unflatten_params(x, model.trainable());
            MetricsRecord rec;
            rec.epoch = epoch + it;
            rec.l_pde = last_losses.pde;
            rec.l_ic = last_losses.ic;
            rec.l_bc = last_losses.bc;
            rec.lambda_pde = lstate.lambda_pde;
            rec.lambda_ic = lstate.lambda_ic;
            rec.lambda_bc = lstate.lambda_bc;
            rec.lr = 0.0;
            rec.wall_s = elapsed();
            result.metrics.push_back(rec);
            if (metrics_os.is_open()) append_metrics(metrics_os, rec);
            ++result.epochs_run;
            if (sr.converged) break;
            if (sr.line_search_failed) {
                result.abort_reason = "line search failed; quasi-Newton phase stopped";
                break;
            }
        }
        for (auto& r : replicas) r.trainable() = model.trainable();
    }

    result.loss_state = lstate;
    if (!cfg.run_dir.empty() && !result.aborted) save_checkpoint("final.ckpt", epoch - 1);
    return result;
}

namespace {

void apply_update_impl(Adam& adam, const ExponentialLr& sched, long epoch, Model& model,
                       std::vector<Model>& replicas, const std::vector<Tensor>& grads,
                       TrainResult& result) {
    adam.set_lr(sched.at(epoch));
    try {
        adam.step(model.trainable(), grads);
    } catch (const std::exception& e) {
        result.aborted = true;
        result.abort_reason = e.what();
        return;
    }
    for (auto& r : replicas) r.trainable() = model.trainable();
}

}  // namespace

// Out-of-line definition kept close to the loop for readability.
void apply_update(Adam& adam, const ExponentialLr& sched, long epoch, Model& model,
                  std::vector<Model>& replicas, const std::vector<Tensor>& grads,
                  const TrainConfig&, TrainResult& result) {
    apply_update_impl(adam, sched, epoch, model, replicas, grads, result);
}

std::vector<Tensor> data_parallel_gradient(Model& model, const TrainingProblem& prob,
                                           const TrainConfig& cfg, int workers) {
    const int W = std::max(1, workers);
    CollocationData data = build_collocation(prob, cfg.collocation, cfg.seed);
    std::vector<Points> shards = shard_interior(data.interior, W);
    std::vector<Model> replicas(static_cast<std::size_t>(W), model);

    std::vector<WorkerTask> tasks(static_cast<std::size_t>(W));
    std::vector<WorkerOutput> outputs(static_cast<std::size_t>(W));
    for (int w = 0; w < W; ++w) {
        auto& t = tasks[static_cast<std::size_t>(w)];
        t.model = &replicas[static_cast<std::size_t>(w)];
        t.prob = &prob;
        t.interior = &shards[static_cast<std::size_t>(w)];
        t.shared = &data;
        t.cfg = &cfg;
    }
    if (W == 1) {
        outputs[0] = run_worker_epoch(tasks[0]);
    } else {
        std::vector<std::thread> threads;
        for (int w = 0; w < W; ++w)
            threads.emplace_back([&, w] {
                outputs[static_cast<std::size_t>(w)] =
                    run_worker_epoch(tasks[static_cast<std::size_t>(w)]);
            });
        for (auto& t : threads) t.join();
    }
    return average_grads(outputs, -1);
}

TrainResult curriculum_run(Model& model, TrainingProblem prob, TrainConfig base,
                           std::span<const CurriculumStage> stages) {
    if (stages.empty()) throw TensorError("curriculum: no stages");

    // staged-sampling validation: interior counts must strictly increase
    std::size_t prev = 0;
    bool any_colloc = false;
    for (const auto& st : stages) {
        if (!st.collocation) continue;
        std::size_t n = st.collocation->interior_count();
        if (any_colloc && n <= prev)
            throw TensorError("curriculum: staged collocation sizes must strictly increase");
        prev = n;
        any_colloc = true;
    }

    TrainResult last;
    for (const auto& st : stages) {
        TrainingProblem p = prob;
        if (st.advection_c) p.residual.advection_c = *st.advection_c;
        TrainConfig cfg = base;
        if (st.collocation) cfg.collocation = *st.collocation;
        cfg.epochs = st.epochs;
        if (st.lambdas) {
            cfg.balancing.enabled = false;  // fixed stage weights
        }
        last = train(model, p, cfg);
        if (last.aborted) break;
    }
    return last;
}

}  // namespace pinnlab
