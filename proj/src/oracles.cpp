#include "infotok/oracles.hpp"

#include "infotok/gradcheck.hpp"
#include "infotok/miest.hpp"
#include "infotok/rng.hpp"
#include "infotok/synthdata.hpp"
#include "infotok/toymodel.hpp"
#include "infotok/vib.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <sstream>

namespace infotok::oracles {

void SuiteResult::check(bool ok, const std::string& line) {
    passed = passed && ok;
    lines.push_back(std::string(ok ? "  ok   " : "  FAIL ") + line);
}

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

} // namespace

SuiteResult kl_suite() {
    SuiteResult suite;
    suite.name = "kl";
    rng::Stream stream(2024, rng::Role::oracle, 100);

    {
        vib::GaussianPosterior post(Eigen::VectorXd::Zero(4), Eigen::VectorXd::Zero(4));
        suite.check(vib::kl_to_standard_normal(post) == 0.0, "posterior = prior gives KL 0");
    }

    int agree = 0;
    double worst_z = 0.0;
    const int trials = 50;
    for (int trial = 0; trial < trials; ++trial) {
        const auto d = static_cast<Eigen::Index>(1 + stream.below(8));
        Eigen::VectorXd mu(d), ls(d);
        for (Eigen::Index j = 0; j < d; ++j) {
            mu[j] = stream.uniform(-2.0, 2.0);
            ls[j] = stream.uniform(-1.0, 1.0);
        }
        vib::GaussianPosterior post(mu, ls);
        const double closed = vib::kl_to_standard_normal(post);
        const auto mc = vib::kl_monte_carlo(post, {d}, 1000000,
                                            32024 + static_cast<std::uint64_t>(trial));
        const double z = std::abs(closed - mc.value) / std::max(mc.std_error, 1e-300);
        worst_z = std::max(worst_z, z);
        if (z <= 3.0) ++agree;
        suite.passed = suite.passed && z <= 3.0;
    }
    suite.lines.push_back((agree == trials ? "  ok   " : "  FAIL ") + std::to_string(agree) + "/" +
                          std::to_string(trials) +
                          " posteriors agree within 3 standard errors (worst |z| = " +
                          fmt(worst_z) + ")");
    suite.passed = suite.passed && agree == trials;
    return suite;
}

SuiteResult mi_suite() {
    SuiteResult suite;
    suite.name = "mi";
    rng::Stream stream(7, rng::Role::oracle, 200);

    {
        Eigen::MatrixXd diag = Eigen::MatrixXd::Zero(4, 4);
        for (int i = 0; i < 4; ++i) diag(i, i) = 0.25;
        const double mi_diag = mi::discrete_mi(mi::DiscreteJoint(diag));
        suite.check(std::abs(mi_diag - std::log(4.0)) <= 1e-12,
                    "diagonal 4x4 joint has MI log 4 (" + fmt(mi_diag) + ")");
    }
    {
        Eigen::VectorXd px(4), py(4);
        for (int i = 0; i < 4; ++i) px[i] = stream.uniform();
        for (int i = 0; i < 4; ++i) py[i] = stream.uniform();
        px /= px.sum();
        py /= py.sum();
        Eigen::MatrixXd indep = px * py.transpose();
        indep /= indep.sum();
        const double mi_indep = mi::discrete_mi(mi::DiscreteJoint(indep));
        suite.check(std::abs(mi_indep) <= 1e-12,
                    "independent joint has MI 0 (" + fmt(mi_indep) + ")");
    }
    {
        bool symmetric = true;
        double worst = 0.0;
        for (int trial = 0; trial < 50; ++trial) {
            Eigen::MatrixXd t(3 + trial % 3, 2 + trial % 4);
            for (Eigen::Index i = 0; i < t.rows(); ++i) {
                for (Eigen::Index j = 0; j < t.cols(); ++j) t(i, j) = stream.uniform();
            }
            t /= t.sum();
            const double a = mi::discrete_mi(mi::DiscreteJoint(t));
            const double b = mi::discrete_mi(mi::DiscreteJoint(t.transpose()));
            worst = std::max(worst, std::abs(a - b));
            symmetric = symmetric && std::abs(a - b) <= 1e-12;
        }
        suite.check(symmetric, "discrete MI symmetric under transpose on 50 random joints (worst "
                               "gap " + fmt(worst) + ")");
    }
    {
        bool bounded = true;
        for (int trial = 0; trial < 200; ++trial) {
            const auto k = static_cast<Eigen::Index>(2 + stream.below(7));
            const auto d = static_cast<Eigen::Index>(2 + stream.below(5));
            Eigen::MatrixXd v(k, d), t(k, d);
            for (Eigen::Index i = 0; i < k; ++i) {
                for (Eigen::Index j = 0; j < d; ++j) {
                    v(i, j) = stream.normal();
                    t(i, j) = stream.normal();
                }
            }
            const double tau = stream.uniform(0.05, 2.0);
            const double value = mi::infonce(mi::EmbeddingBatch(v, t), tau);
            bounded = bounded && value <= 0.0; // estimate = value + log K <= log K
        }
        suite.check(bounded, "InfoNCE estimate <= log K on 200 random batches (exact)");
    }
    {
        Eigen::MatrixXd same(2, 3);
        same << 1.0, 2.0, 3.0, 1.0, 2.0, 3.0;
        const double value = mi::infonce(mi::EmbeddingBatch(same, same), 0.5);
        const double estimate = value + std::log(2.0);
        suite.check(std::abs(estimate) <= 1e-10,
                    "all-equal batch estimate is 0 (" + fmt(estimate) + ")");
    }
    {
        int ok_count = 0;
        const int trials = 20;
        for (int trial = 0; trial < trials; ++trial) {
            const auto comps = static_cast<std::size_t>(1 + stream.below(4));
            const auto d = static_cast<Eigen::Index>(1 + stream.below(4));
            std::vector<mi::MixtureComponent> components(comps);
            double wsum = 0.0;
            for (auto& c : components) {
                c.weight = stream.uniform();
                wsum += c.weight;
                c.mean.resize(d);
                c.log_scale.resize(d);
                for (Eigen::Index j = 0; j < d; ++j) {
                    c.mean[j] = stream.uniform(-3.0, 3.0);
                    c.log_scale[j] = stream.uniform(-0.7, 0.7);
                }
            }
            for (auto& c : components) c.weight /= wsum;
            mi::MixtureChannel channel(components);
            double avg_kl = 0.0;
            for (const auto& c : channel.components) {
                avg_kl += c.weight * vib::kl_to_standard_normal({c.mean, c.log_scale});
            }
            const auto est = mi::mixture_channel_mi(channel, 100000,
                                                    90 + static_cast<std::uint64_t>(trial));
            if (avg_kl - est.value >= -3.0 * est.std_error) ++ok_count;
        }
        suite.check(ok_count == trials,
                    std::to_string(ok_count) + "/" + std::to_string(trials) +
                        " mixture channels satisfy avg KL - MI >= -3 SE");
    }
    return suite;
}

SuiteResult dpi_suite() {
    SuiteResult suite;
    suite.name = "dpi";
    int joints_ok = 0;
    std::size_t maps_checked = 0;
    const int trials = 100;
    for (int trial = 0; trial < trials; ++trial) {
        const auto inst = synth::dpi_instance(1000 + static_cast<std::uint64_t>(trial), 4, 4, 3);
        const double base = mi::discrete_mi(inst.joint);
        bool ok = true;
        for (const auto& f : inst.maps) {
            const double pushed = mi::pushforward_mi(inst.joint, f, inst.out_size);
            ok = ok && pushed <= base + 1e-12;
            ++maps_checked;
        }
        if (ok) ++joints_ok;
    }
    suite.check(joints_ok == trials,
                std::to_string(joints_ok) + "/" + std::to_string(trials) + " joints (" +
                    std::to_string(maps_checked) +
                    " maps) satisfy pushforward MI <= joint MI + 1e-12");
    return suite;
}

SuiteResult cka_suite() {
    SuiteResult suite;
    suite.name = "cka";
    rng::Stream stream(11, rng::Role::oracle, 300);

    Eigen::MatrixXd x(64, 8);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = stream.normal();
    }
    suite.check(std::abs(mi::linear_cka(x, x) - 1.0) <= 1e-12, "CKA(X, X) = 1");

    {
        bool ok = true;
        double worst = 0.0;
        for (int trial = 0; trial < 10; ++trial) {
            Eigen::MatrixXd r(8, 8);
            for (Eigen::Index i = 0; i < 8; ++i) {
                for (Eigen::Index j = 0; j < 8; ++j) r(i, j) = stream.normal();
            }
            const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(r).householderQ();
            const double v = mi::linear_cka(x, x * q);
            worst = std::max(worst, std::abs(v - 1.0));
            ok = ok && std::abs(v - 1.0) <= 1e-10;
        }
        suite.check(ok, "CKA invariant to orthogonal right-multiplication (worst gap " +
                            fmt(worst) + ")");
    }
    {
        const double v = mi::linear_cka(2.5 * x, x * 0.3);
        suite.check(std::abs(v - 1.0) <= 1e-10, "CKA invariant to isotropic scaling");
    }
    {
        bool ok = true;
        for (int trial = 0; trial < 10; ++trial) {
            Eigen::MatrixXd y(64, 8);
            for (Eigen::Index i = 0; i < y.rows(); ++i) {
                for (Eigen::Index j = 0; j < y.cols(); ++j) y(i, j) = stream.normal();
            }
            ok = ok && mi::linear_cka(x, y) < 0.3;
        }
        suite.check(ok, "CKA of independent random matrices stays below 0.3");
    }
    return suite;
}

namespace {

// Scalar wrapper around one primitive: sum(seed * op(x)) so the check also
// exercises non-uniform upstream gradients.
struct PrimitiveCase {
    std::string name;
    std::function<double(rng::Stream&)> run; // returns max relative error
};

double check_unary(rng::Stream& stream,
                   const std::function<ad::NodeId(ad::Graph&, ad::NodeId)>& build,
                   bool positive_domain) {
    ad::Graph g;
    const std::size_t rows = 2 + stream.below(3);
    const std::size_t cols = 2 + stream.below(3);
    ad::NodeId x = g.input({rows, cols});
    ad::NodeId y = build(g, x);
    ad::Tensor seed(g.node_shape(y));
    for (std::size_t i = 0; i < seed.size(); ++i) seed[i] = stream.uniform(-1.0, 1.0);
    g.sum(g.multiply(y, g.constant(std::move(seed))));

    ad::Tensor point({rows, cols});
    for (std::size_t i = 0; i < point.size(); ++i) {
        point[i] = positive_domain ? 0.5 + 2.0 * stream.uniform() : stream.uniform(-2.0, 2.0);
    }
    return ad::grad_check(g, {point}, 1e-5, 1e-5).max_rel_error;
}

double check_binary(rng::Stream& stream,
                    const std::function<ad::NodeId(ad::Graph&, ad::NodeId, ad::NodeId)>& build) {
    ad::Graph g;
    const std::size_t rows = 2 + stream.below(3);
    const std::size_t cols = 2 + stream.below(3);
    ad::NodeId a = g.input({rows, cols});
    ad::NodeId b = g.input({rows, cols});
    ad::NodeId y = build(g, a, b);
    ad::Tensor seed(g.node_shape(y));
    for (std::size_t i = 0; i < seed.size(); ++i) seed[i] = stream.uniform(-1.0, 1.0);
    g.sum(g.multiply(y, g.constant(std::move(seed))));

    ad::Tensor pa({rows, cols}), pb({rows, cols});
    for (std::size_t i = 0; i < pa.size(); ++i) pa[i] = stream.uniform(-2.0, 2.0);
    for (std::size_t i = 0; i < pb.size(); ++i) pb[i] = stream.uniform(-2.0, 2.0);
    return ad::grad_check(g, {pa, pb}, 1e-5, 1e-5).max_rel_error;
}

std::vector<PrimitiveCase> primitive_cases() {
    std::vector<PrimitiveCase> cases;
    cases.push_back({"add", [](rng::Stream& s) {
                         return check_binary(s, [](ad::Graph& g, ad::NodeId a, ad::NodeId b) {
                             return g.add(a, b);
                         });
                     }});
    cases.push_back({"multiply", [](rng::Stream& s) {
                         return check_binary(s, [](ad::Graph& g, ad::NodeId a, ad::NodeId b) {
                             return g.multiply(a, b);
                         });
                     }});
    cases.push_back({"squared_error", [](rng::Stream& s) {
                         return check_binary(s, [](ad::Graph& g, ad::NodeId a, ad::NodeId b) {
                             return g.squared_error(a, b);
                         });
                     }});
    cases.push_back({"matmul", [](rng::Stream& s) {
                         ad::Graph g;
                         const std::size_t r = 2 + s.below(3);
                         const std::size_t k = 2 + s.below(3);
                         const std::size_t c = 2 + s.below(3);
                         ad::NodeId a = g.input({r, k});
                         ad::NodeId b = g.input({k, c});
                         ad::NodeId y = g.matmul(a, b);
                         ad::Tensor seed(g.node_shape(y));
                         for (std::size_t i = 0; i < seed.size(); ++i)
                             seed[i] = s.uniform(-1.0, 1.0);
                         g.sum(g.multiply(y, g.constant(std::move(seed))));
                         ad::Tensor pa({r, k}), pb({k, c});
                         for (std::size_t i = 0; i < pa.size(); ++i) pa[i] = s.uniform(-2.0, 2.0);
                         for (std::size_t i = 0; i < pb.size(); ++i) pb[i] = s.uniform(-2.0, 2.0);
                         return ad::grad_check(g, {pa, pb}, 1e-5, 1e-5).max_rel_error;
                     }});
    cases.push_back({"exp", [](rng::Stream& s) {
                         return check_unary(s, [](ad::Graph& g, ad::NodeId x) { return g.exp(x); },
                                            false);
                     }});
    cases.push_back({"log", [](rng::Stream& s) {
                         return check_unary(s, [](ad::Graph& g, ad::NodeId x) { return g.log(x); },
                                            true);
                     }});
    cases.push_back({"logsumexp", [](rng::Stream& s) {
                         return check_unary(
                             s, [](ad::Graph& g, ad::NodeId x) { return g.logsumexp(x); }, false);
                     }});
    cases.push_back({"mean", [](rng::Stream& s) {
                         return check_unary(s, [](ad::Graph& g, ad::NodeId x) { return g.mean(x); },
                                            false);
                     }});
    cases.push_back({"sum", [](rng::Stream& s) {
                         return check_unary(s, [](ad::Graph& g, ad::NodeId x) { return g.sum(x); },
                                            false);
                     }});
    cases.push_back({"tanh", [](rng::Stream& s) {
                         return check_unary(s, [](ad::Graph& g, ad::NodeId x) { return g.tanh(x); },
                                            false);
                     }});
    cases.push_back({"clamp", [](rng::Stream& s) {
                         // Bounds inside the sample range so both regimes are hit.
                         // Central differences straddle the kink, so points are
                         // kept a safe margin away from the bounds.
                         ad::Graph g;
                         const std::size_t rows = 2 + s.below(3);
                         const std::size_t cols = 2 + s.below(3);
                         ad::NodeId x = g.input({rows, cols});
                         ad::NodeId y = g.clamp(x, -1.5, 1.5);
                         ad::Tensor seed(g.node_shape(y));
                         for (std::size_t i = 0; i < seed.size(); ++i)
                             seed[i] = s.uniform(-1.0, 1.0);
                         g.sum(g.multiply(y, g.constant(std::move(seed))));
                         ad::Tensor point({rows, cols});
                         for (std::size_t i = 0; i < point.size(); ++i) {
                             double v = s.uniform(-2.0, 2.0);
                             while (std::abs(std::abs(v) - 1.5) < 1e-3) v = s.uniform(-2.0, 2.0);
                             point[i] = v;
                         }
                         return ad::grad_check(g, {point}, 1e-5, 1e-5).max_rel_error;
                     }});
    cases.push_back({"cosine_sim", [](rng::Stream& s) {
                         return check_binary(s, [](ad::Graph& g, ad::NodeId a, ad::NodeId b) {
                             return g.cosine_similarity(a, b);
                         });
                     }});
    cases.push_back({"softmax_xent", [](rng::Stream& s) {
                         ad::Graph g;
                         const std::size_t rows = 2 + s.below(3);
                         const std::size_t classes = 2 + s.below(4);
                         ad::NodeId x = g.input({rows, classes});
                         std::vector<int> targets(rows);
                         for (auto& t : targets)
                             t = static_cast<int>(s.below(classes));
                         ad::NodeId y = g.softmax_cross_entropy(x, targets);
                         ad::Tensor seed(g.node_shape(y));
                         for (std::size_t i = 0; i < seed.size(); ++i)
                             seed[i] = s.uniform(-1.0, 1.0);
                         g.sum(g.multiply(y, g.constant(std::move(seed))));
                         ad::Tensor point({rows, classes});
                         for (std::size_t i = 0; i < point.size(); ++i)
                             point[i] = s.uniform(-2.0, 2.0);
                         return ad::grad_check(g, {point}, 1e-5, 1e-5).max_rel_error;
                     }});
    return cases;
}

} // namespace

SuiteResult gradcheck_suite() {
    SuiteResult suite;
    suite.name = "gradcheck";
    rng::Stream stream(31, rng::Role::oracle, 400);

    for (const auto& c : primitive_cases()) {
        double worst = 0.0;
        for (int point = 0; point < 100; ++point) worst = std::max(worst, c.run(stream));
        suite.check(worst < 1e-5,
                    c.name + ": 100 random points, max relative error " + fmt(worst));
    }

    // Full objective at 5 random configurations, 4-sample batches.
    double worst_total = 0.0;
    for (int config = 0; config < 5; ++config) {
        synth::GeneratorConfig gen;
        gen.samples = 8;
        gen.seed = 500 + static_cast<std::uint64_t>(config);
        const auto data = synth::generate(gen);

        toy::ModelDims dims;
        const auto model =
            toy::UnifiedModel::random_init(dims, 600 + static_cast<std::uint64_t>(config));

        toy::InfoTokHyper hyper;
        hyper.beta_u = 0.3 + 0.4 * config;
        hyper.beta_g = 1.1 - 0.1 * config;
        hyper.alpha_u = 0.5 + 0.2 * config;
        hyper.alpha_g = 1.3 - 0.2 * config;
        hyper.lambda = 0.05 + 0.1 * config;
        hyper.tau = 0.15 + 0.05 * config;

        const toy::ModelBatch batch = toy::ModelBatch::from(data.rows(0, 4));
        toy::BranchNoise noise;
        noise.understand.resize(4, dims.latent_dim);
        noise.generate.resize(4, dims.latent_dim);
        for (int i = 0; i < 4; ++i) {
            for (int j = 0; j < dims.latent_dim; ++j) {
                noise.understand(i, j) = stream.normal();
                noise.generate(i, j) = stream.normal();
            }
        }

        toy::LossGraph lg = toy::build_loss_graph(model, batch, hyper, noise);
        const auto report = ad::grad_check(lg.graph, lg.total, lg.weights, 1e-5, 1e-4);
        worst_total = std::max(worst_total, report.max_rel_error);
    }
    suite.check(worst_total < 1e-4,
                "total objective: 5 random configurations, max relative error " +
                    fmt(worst_total));
    return suite;
}

} // namespace infotok::oracles
