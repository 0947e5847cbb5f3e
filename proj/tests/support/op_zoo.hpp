#pragma once

// Registry of every differentiable op with randomized input builders, used by
// the gradient-correctness suites. Each case builds fresh leaf inputs, applies
// the op, and contracts the output against a fixed random constant so the
// check reduces to scalar finite differences.

#include <functional>
#include <string>
#include <vector>

#include "rewirelab/rng.hpp"
#include "rewirelab/tensor.hpp"

namespace opzoo {

namespace ad = rewirelab::ad;
using rewirelab::Rng;

struct OpCase {
    std::string name;
    // Returns per-input (shape, values). Values are sampled away from any
    // nondifferentiable point of the op.
    std::function<std::vector<std::pair<ad::Shape, std::vector<double>>>(Rng&)> make;
    // Applies the op to leafed inputs. aux seeds dropout masks, random
    // constants, labels; identical across repeated forward evaluations.
    std::function<ad::Tensor(ad::Tape&, const std::vector<ad::Tensor>&, std::uint64_t aux)> apply;
};

inline std::vector<double> rand_vec(Rng& rng, long long n, double lo = -1.5, double hi = 1.5) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

inline std::vector<double> rand_vec_away_from_zero(Rng& rng, long long n, double margin = 0.05) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (auto& x : v) {
        double y = rng.uniform(margin, 1.5);
        x = rng.uniform() < 0.5 ? y : -y;
    }
    return v;
}

// Contract out against a deterministic random constant to make a scalar.
inline ad::Tensor contract(ad::Tape& t, const ad::Tensor& out, std::uint64_t aux) {
    Rng r(aux ^ 0xABCDEF12345ULL);
    std::vector<double> c(static_cast<std::size_t>(out.size()));
    for (auto& x : c) x = r.uniform(-1.0, 1.0);
    ad::Tensor cst = t.constant(out.shape(), c);
    return ad::reduce_sum(ad::mul(out, cst));
}

inline std::vector<OpCase> all_ops() {
    std::vector<OpCase> ops;

    auto two_mats = [](Rng& rng) {
        return std::vector<std::pair<ad::Shape, std::vector<double>>>{{{3, 4}, rand_vec(rng, 12)},
                                                                      {{3, 4}, rand_vec(rng, 12)}};
    };

    ops.push_back({"matmul",
                   [](Rng& rng) {
                       return std::vector<std::pair<ad::Shape, std::vector<double>>>{{{3, 4}, rand_vec(rng, 12)},
                                                                                     {{4, 2}, rand_vec(rng, 8)}};
                   },
                   [](ad::Tape& t, const std::vector<ad::Tensor>& in, std::uint64_t aux) {
                       return contract(t, ad::matmul(in[0], in[1]), aux);
                   }});
    ops.push_back({"add", two_mats,
                   [](ad::Tape& t, const std::vector<ad::Tensor>& in, std::uint64_t aux) {
                       return contract(t, ad::add(in[0], in[1]), aux);
                   }});
    ops.push_back({"sub", two_mats,
                   [](ad::Tape& t, const std::vector<ad::Tensor>& in, std::uint64_t aux) {
                       return contract(t, ad::sub(in[0], in[1]), aux);
                   }});
    ops.push_back({"mul", two_mats,
                   [](ad::Tape& t, const std::vector<ad::Tensor>& in, std::uint64_t aux) {
                       return contract(t, ad::mul(in[0], in[1]), aux);
                   }});
    ops.push_back({"squared_error", two_mats,
                   [](ad::Tape& t, const std::vector<ad::Tensor>& in, std::uint64_t aux) {
                       return contract(t, ad::squared_error(in[0], in[1]), aux);
                   }});
    ops.push_back({"scale",
                   [](Rng& rng) {
                       return std::vector<std::pair<ad::Shape, std::vector<double>>>{{{2, 5}, rand_vec(rng, 10)}};
                   },
                   [](ad::Tape& t, const std::vector<ad::Tensor>& in, std::uint64_t aux) {
                       return contract(t, ad::scale(in[0], 0.37), aux);
                   }});
    ops.push_back({"add_rowvec",
                   [](Rng& rng) {
                       return std::vector<std::pair<ad::Shape, std::vector<double>>>{{{3, 4}, rand_vec(rng, 12)},
                                                                                     {{4}, rand_vec(rng, 4)}};
                   },
                   [](ad::Tape& t, const std::vector<ad::Tensor>& in, std::uint64_t aux) {
                       return contract(t, ad::add_rowvec(in[0], in[1]), aux);
                   }});
    ops.push_back({"scale_rows",
                   [](Rng& rng) {
                       return std::vector<std::pair<ad::Shape, std::vector<double>>>{{{3, 4}, rand_vec(rng, 12)},
                                                                                     {{3}, rand_vec(rng, 3)}};
                   },
                   [](ad::Tape& t, const std::vector<ad::Tensor>& in, std::uint64_t aux) {
                       return contract(t, ad::scale_rows(in[0], in[1]), aux);
                   }});
    ops.push_back({"scale_cols",
                   [](Rng& rng) {
                       return std::vector<std::pair<ad::Shape, std::vector<double>>>{{{3, 4}, rand_vec(rng, 12)},
                                                                                     {{4}, rand_vec(rng, 4)}};
                   },
                   [](ad::Tape& t, const std::vector<ad::Tensor>& in, std::uint64_t aux) {
                       return contract(t, ad::scale_cols(in[0], in[1]), aux);
                   }});

    auto one_mat = [](Rng& rng) {
        return std::vector<std::pair<ad::Shape, std::vector<double>>>{{{3, 5}, rand_vec(rng, 15)}};
    };
    auto one_mat_nz = [](Rng& rng) {
        return std::vector<std::pair<ad::Shape, std::vector<double>>>{{{3, 5}, rand_vec_away_from_zero(rng, 15)}};
    };

    ops.push_back({"relu", one_mat_nz,
                   [](ad::Tape& t, const std::vector<ad::Tensor>& in, std::uint64_t aux) {
                       return contract(t, ad::relu(in[0]), aux);
                   }});
    ops.push_back({"abs", one_mat_nz,
                   [](ad::Tape& t, const std::vector<ad::Tensor>& in, std::uint64_t aux) {
                       return contract(t, ad::abs_val(in[0]), aux);
                   }});
    ops.push_back({"gelu", one_mat,
                   [](ad::Tape& t, const std::vector<ad::Tensor>& in, std::uint64_t aux) {
                       return contract(t, ad::gelu(in[0]), aux);
                   }});
    ops.push_back({"sigmoid", one_mat,
                   [](ad::Tape& t, const std::vector<ad::Tensor>& in, std::uint64_t aux) {
                       return contract(t, ad::sigmoid(in[0]), aux);
                   }});
    ops.push_back({"rsqrt",
                   [](Rng& rng) {
                       return std::vector<std::pair<ad::Shape, std::vector<double>>>{{{7}, rand_vec(rng, 7, 0.3, 2.5)}};
                   },
                   [](ad::Tape& t, const std::vector<ad::Tensor>& in, std::uint64_t aux) {
                       return contract(t, ad::rsqrt(in[0]), aux);
                   }});
    ops.push_back({"safe_recip", one_mat_nz,
                   [](ad::Tape& t, const std::vector<ad::Tensor>& in, std::uint64_t aux) {
                       return contract(t, ad::safe_recip(in[0]), aux);
                   }});
    ops.push_back({"transpose", one_mat,
                   [](ad::Tape& t, const std::vector<ad::Tensor>& in, std::uint64_t aux) {
                       return contract(t, ad::transpose(in[0]), aux);
                   }});
    ops.push_back({"permute",
                   [](Rng& rng) {
                       return std::vector<std::pair<ad::Shape, std::vector<double>>>{{{2, 3, 4}, rand_vec(rng, 24)}};
                   },
                   [](ad::Tape& t, const std::vector<ad::Tensor>& in, std::uint64_t aux) {
                       return contract(t, ad::permute(in[0], {2, 0, 1}), aux);
                   }});
    ops.push_back({"reshape", one_mat,
                   [](ad::Tape& t, const std::vector<ad::Tensor>& in, std::uint64_t aux) {
                       return contract(t, ad::reshape(in[0], {5, 3}), aux);
                   }});
    ops.push_back({"concat",
                   [](Rng& rng) {
                       return std::vector<std::pair<ad::Shape, std::vector<double>>>{{{2, 3}, rand_vec(rng, 6)},
                                                                                     {{2, 2}, rand_vec(rng, 4)}};
                   },
                   [](ad::Tape& t, const std::vector<ad::Tensor>& in, std::uint64_t aux) {
                       return contract(t, ad::concat({in[0], in[1]}, 1), aux);
                   }});
    ops.push_back({"last_step",
                   [](Rng& rng) {
                       return std::vector<std::pair<ad::Shape, std::vector<double>>>{{{2, 3, 5}, rand_vec(rng, 30)}};
                   },
                   [](ad::Tape& t, const std::vector<ad::Tensor>& in, std::uint64_t aux) {
                       return contract(t, ad::last_step(in[0]), aux);
                   }});
    ops.push_back({"reduce_sum", one_mat,
                   [](ad::Tape& t, const std::vector<ad::Tensor>& in, std::uint64_t aux) {
                       return contract(t, ad::reduce_sum(in[0]), aux);
                   }});
    ops.push_back({"reduce_mean", one_mat,
                   [](ad::Tape& t, const std::vector<ad::Tensor>& in, std::uint64_t aux) {
                       return contract(t, ad::reduce_mean(in[0]), aux);
                   }});
    ops.push_back({"rowsum", one_mat,
                   [](ad::Tape& t, const std::vector<ad::Tensor>& in, std::uint64_t aux) {
                       return contract(t, ad::rowsum(in[0]), aux);
                   }});
    ops.push_back({"pick", one_mat,
                   [](ad::Tape& t, const std::vector<ad::Tensor>& in, std::uint64_t aux) {
                       return contract(t, ad::pick(in[0], static_cast<long long>(aux % 15)), aux);
                   }});
    ops.push_back({"row_softmax", one_mat,
                   [](ad::Tape& t, const std::vector<ad::Tensor>& in, std::uint64_t aux) {
                       return contract(t, ad::row_softmax(in[0]), aux);
                   }});
    ops.push_back({"masked_row_softmax",
                   [](Rng& rng) {
                       return std::vector<std::pair<ad::Shape, std::vector<double>>>{{{4, 5}, rand_vec(rng, 20)}};
                   },
                   [](ad::Tape& t, const std::vector<ad::Tensor>& in, std::uint64_t aux) {
                       Rng r(aux ^ 0x77ULL);
                       std::vector<double> m(20);
                       for (std::size_t i = 0; i < m.size(); ++i) m[i] = r.uniform() < 0.6 ? 1.0 : 0.0;
                       for (int row = 0; row < 4; ++row) m[static_cast<std::size_t>(row) * 5 + (row % 5)] = 1.0;
                       ad::Tensor mask = t.constant({4, 5}, m);
                       return contract(t, ad::masked_row_softmax(in[0], mask), aux);
                   }});
    ops.push_back({"cross_entropy_logits",
                   [](Rng& rng) {
                       return std::vector<std::pair<ad::Shape, std::vector<double>>>{{{6, 4}, rand_vec(rng, 24)}};
                   },
                   [](ad::Tape& t, const std::vector<ad::Tensor>& in, std::uint64_t aux) {
                       Rng r(aux ^ 0x99ULL);
                       std::vector<int> labels(6);
                       std::vector<std::uint8_t> mask(6);
                       for (int i = 0; i < 6; ++i) {
                           labels[static_cast<std::size_t>(i)] = r.index(4);
                           mask[static_cast<std::size_t>(i)] = r.uniform() < 0.7 ? 1 : 0;
                       }
                       mask[0] = 1;
                       ad::Tensor ce = ad::cross_entropy_logits(in[0], labels, mask);
                       return contract(t, ce, aux);
                   }});
    ops.push_back({"dropout", one_mat,
                   [](ad::Tape& t, const std::vector<ad::Tensor>& in, std::uint64_t aux) {
                       return contract(t, ad::dropout(in[0], 0.4, aux ^ 0xD00DULL), aux);
                   }});
    ops.push_back({"conv1d",
                   [](Rng& rng) {
                       return std::vector<std::pair<ad::Shape, std::vector<double>>>{
                           {{2, 3, 9}, rand_vec(rng, 54)},   // x
                           {{4, 3, 3}, rand_vec(rng, 36)},   // w
                           {{4}, rand_vec(rng, 4)}};         // bias
                   },
                   [](ad::Tape& t, const std::vector<ad::Tensor>& in, std::uint64_t aux) {
                       return contract(t, ad::conv1d(in[0], in[1], in[2], 2), aux);
                   }});

    return ops;
}

// Runs one randomized finite-difference trial of an op case. Returns the max
// normalized error across all input components.
inline double fd_trial(const OpCase& op, std::uint64_t trial_seed, double step = 1e-5) {
    Rng rng(trial_seed);
    auto specs = op.make(rng);
    std::uint64_t aux = rng.next_u64();

    auto eval = [&](const std::vector<std::vector<double>>& vals) {
        ad::Tape t;
        std::vector<ad::Tensor> leafs;
        for (std::size_t i = 0; i < specs.size(); ++i) leafs.push_back(t.param(specs[i].first, vals[i]));
        return op.apply(t, leafs, aux).item();
    };

    std::vector<std::vector<double>> vals;
    for (auto& s : specs) vals.push_back(s.second);

    // analytic gradients
    ad::Tape t;
    std::vector<ad::Tensor> leafs;
    for (std::size_t i = 0; i < specs.size(); ++i) leafs.push_back(t.param(specs[i].first, vals[i]));
    ad::Tensor loss = op.apply(t, leafs, aux);
    t.backward(loss);

    double worst = 0.0;
    for (std::size_t p = 0; p < vals.size(); ++p) {
        const auto& an = leafs[p].grad();
        for (std::size_t i = 0; i < vals[p].size(); ++i) {
            double keep = vals[p][i];
            vals[p][i] = keep + step;
            double fp = eval(vals);
            vals[p][i] = keep - step;
            double fm = eval(vals);
            vals[p][i] = keep;
            double fd = (fp - fm) / (2.0 * step);
            double denom = std::max({1.0, std::fabs(fd), std::fabs(an[i])});
            worst = std::max(worst, std::fabs(fd - an[i]) / denom);
        }
    }
    return worst;
}

}  // namespace opzoo
