#include "asuka/core/autodiff.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace asuka::core {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapC = Eigen::Map<const MatRM>;

MapC as_mat(const Tensor& t, std::int64_t rows, std::int64_t cols) {
    return MapC(t.data.data(), rows, cols);
}
MapM as_mat(Tensor& t, std::int64_t rows, std::int64_t cols) {
    return MapM(t.data.data(), rows, cols);
}

Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> bw) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    bool rg = false;
    for (const auto& p : parents) rg = rg || p->requires_grad;
    n->requires_grad = rg;
    if (rg) {
        n->parents = std::move(parents);
        n->backward_fn = std::move(bw);
    }
    return n;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (!a->value.same_shape(b->value)) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    a->value.shape_str() + " vs " + b->value.shape_str());
    }
}

}  // namespace

Var constant(Tensor v) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->requires_grad = false;
    return n;
}

Var make_param(Tensor v) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->requires_grad = true;
    return n;
}

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b->value.data[i];
    return make_node(std::move(out), {a, b}, [](Node& n) {
        for (int k = 0; k < 2; ++k) {
            auto& p = n.parents[k];
            if (!p->requires_grad) continue;
            p->ensure_grad();
            for (std::size_t i = 0; i < n.grad.data.size(); ++i) p->grad.data[i] += n.grad.data[i];
        }
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b->value.data[i];
    return make_node(std::move(out), {a, b}, [](Node& n) {
        auto& pa = n.parents[0];
        auto& pb = n.parents[1];
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (std::size_t i = 0; i < n.grad.data.size(); ++i) pa->grad.data[i] += n.grad.data[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (std::size_t i = 0; i < n.grad.data.size(); ++i) pb->grad.data[i] -= n.grad.data[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b->value.data[i];
    return make_node(std::move(out), {a, b}, [](Node& n) {
        auto& pa = n.parents[0];
        auto& pb = n.parents[1];
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (std::size_t i = 0; i < n.grad.data.size(); ++i)
                pa->grad.data[i] += n.grad.data[i] * pb->value.data[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (std::size_t i = 0; i < n.grad.data.size(); ++i)
                pb->grad.data[i] += n.grad.data[i] * pa->value.data[i];
        }
    });
}

Var scale(const Var& a, double s) {
    Tensor out = a->value;
    for (auto& x : out.data) x *= s;
    return make_node(std::move(out), {a}, [s](Node& n) {
        auto& p = n.parents[0];
        p->ensure_grad();
        for (std::size_t i = 0; i < n.grad.data.size(); ++i) p->grad.data[i] += s * n.grad.data[i];
    });
}

Var add_rowvec(const Var& a, const Var& v) {
    if (a->value.rank() != 2 || v->value.numel() != a->value.dim(1)) {
        throw std::invalid_argument("add_rowvec: need [N,M] + [M]");
    }
    const std::int64_t N = a->value.dim(0), M = a->value.dim(1);
    Tensor out = a->value;
    for (std::int64_t r = 0; r < N; ++r)
        for (std::int64_t c = 0; c < M; ++c) out.data[std::size_t(r * M + c)] += v->value.data[std::size_t(c)];
    return make_node(std::move(out), {a, v}, [N, M](Node& n) {
        auto& pa = n.parents[0];
        auto& pv = n.parents[1];
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (std::size_t i = 0; i < n.grad.data.size(); ++i) pa->grad.data[i] += n.grad.data[i];
        }
        if (pv->requires_grad) {
            pv->ensure_grad();
            for (std::int64_t r = 0; r < N; ++r)
                for (std::int64_t c = 0; c < M; ++c)
                    pv->grad.data[std::size_t(c)] += n.grad.data[std::size_t(r * M + c)];
        }
    });
}

Var add_const(const Var& a, const Tensor& c) {
    if (!a->value.same_shape(c)) throw std::invalid_argument("add_const: shape mismatch");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += c.data[i];
    return make_node(std::move(out), {a}, [](Node& n) {
        auto& p = n.parents[0];
        p->ensure_grad();
        for (std::size_t i = 0; i < n.grad.data.size(); ++i) p->grad.data[i] += n.grad.data[i];
    });
}

Var mul_const(const Var& a, const Tensor& m) {
    if (!a->value.same_shape(m)) throw std::invalid_argument("mul_const: shape mismatch");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= m.data[i];
    Tensor mask = m;
    return make_node(std::move(out), {a}, [mask = std::move(mask)](Node& n) {
        auto& p = n.parents[0];
        p->ensure_grad();
        for (std::size_t i = 0; i < n.grad.data.size(); ++i)
            p->grad.data[i] += n.grad.data[i] * mask.data[i];
    });
}

Var sigmoid(const Var& a) {
    Tensor out = a->value;
    for (auto& x : out.data) x = 1.0 / (1.0 + std::exp(-x));
    Tensor y = out;
    return make_node(std::move(out), {a}, [y = std::move(y)](Node& n) {
        auto& p = n.parents[0];
        p->ensure_grad();
        for (std::size_t i = 0; i < n.grad.data.size(); ++i) {
            const double s = y.data[i];
            p->grad.data[i] += n.grad.data[i] * s * (1.0 - s);
        }
    });
}

Var silu(const Var& a) {
    Tensor out = a->value;
    for (auto& x : out.data) x = x / (1.0 + std::exp(-x));
    Tensor in = a->value;
    return make_node(std::move(out), {a}, [in = std::move(in)](Node& n) {
        auto& p = n.parents[0];
        p->ensure_grad();
        for (std::size_t i = 0; i < n.grad.data.size(); ++i) {
            const double x = in.data[i];
            const double s = 1.0 / (1.0 + std::exp(-x));
            p->grad.data[i] += n.grad.data[i] * (s + x * s * (1.0 - s));
        }
    });
}

Var matmul(const Var& a, const Var& b, bool ta, bool tb) {
    if (a->value.rank() != 2 || b->value.rank() != 2) {
        throw std::invalid_argument("matmul: rank-2 tensors required");
    }
    const std::int64_t ar = a->value.dim(0), ac = a->value.dim(1);
    const std::int64_t br = b->value.dim(0), bc = b->value.dim(1);
    const std::int64_t N = ta ? ac : ar;
    const std::int64_t K = ta ? ar : ac;
    const std::int64_t Kb = tb ? bc : br;
    const std::int64_t M = tb ? br : bc;
    if (K != Kb) {
        throw std::invalid_argument("matmul: inner dim mismatch " + a->value.shape_str() +
                                    (ta ? "^T" : "") + " x " + b->value.shape_str() + (tb ? "^T" : ""));
    }
    Tensor out({N, M});
    {
        auto A = as_mat(a->value, ar, ac);
        auto B = as_mat(b->value, br, bc);
        auto C = as_mat(out, N, M);
        if (!ta && !tb) C.noalias() = A * B;
        else if (ta && !tb) C.noalias() = A.transpose() * B;
        else if (!ta && tb) C.noalias() = A * B.transpose();
        else C.noalias() = A.transpose() * B.transpose();
    }
    return make_node(std::move(out), {a, b}, [ar, ac, br, bc, N, M, ta, tb](Node& n) {
        auto& pa = n.parents[0];
        auto& pb = n.parents[1];
        auto G = as_mat(n.grad, N, M);
        auto A = as_mat(pa->value, ar, ac);
        auto B = as_mat(pb->value, br, bc);
        if (pa->requires_grad) {
            pa->ensure_grad();
            auto dA = as_mat(pa->grad, ar, ac);
            if (!ta && !tb) dA.noalias() += G * B.transpose();
            else if (ta && !tb) dA.noalias() += B * G.transpose();
            else if (!ta && tb) dA.noalias() += G * B;
            else dA.noalias() += B.transpose() * G.transpose();
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            auto dB = as_mat(pb->grad, br, bc);
            if (!ta && !tb) dB.noalias() += A.transpose() * G;
            else if (ta && !tb) dB.noalias() += A * G;
            else if (!ta && tb) dB.noalias() += G.transpose() * A;
            else dB.noalias() += G.transpose() * A.transpose();
        }
    });
}

Var softmax_rows(const Var& a) {
    if (a->value.rank() != 2) throw std::invalid_argument("softmax_rows: rank-2 required");
    const std::int64_t N = a->value.dim(0), M = a->value.dim(1);
    Tensor out = a->value;
    for (std::int64_t r = 0; r < N; ++r) {
        double* row = out.data.data() + r * M;
        double mx = row[0];
        for (std::int64_t c = 1; c < M; ++c) mx = std::max(mx, row[c]);
        double s = 0.0;
        for (std::int64_t c = 0; c < M; ++c) {
            row[c] = std::exp(row[c] - mx);
            s += row[c];
        }
        for (std::int64_t c = 0; c < M; ++c) row[c] /= s;
    }
    Tensor y = out;
    return make_node(std::move(out), {a}, [y = std::move(y), N, M](Node& n) {
        auto& p = n.parents[0];
        p->ensure_grad();
        for (std::int64_t r = 0; r < N; ++r) {
            const double* yr = y.data.data() + r * M;
            const double* gr = n.grad.data.data() + r * M;
            double dot = 0.0;
            for (std::int64_t c = 0; c < M; ++c) dot += yr[c] * gr[c];
            double* out = p->grad.data.data() + r * M;
            for (std::int64_t c = 0; c < M; ++c) out[c] += yr[c] * (gr[c] - dot);
        }
    });
}

Var layernorm_rows(const Var& x, const Var& gamma, const Var& beta, double eps) {
    if (x->value.rank() != 2) throw std::invalid_argument("layernorm_rows: rank-2 required");
    const std::int64_t N = x->value.dim(0), M = x->value.dim(1);
    if (gamma->value.numel() != M || beta->value.numel() != M) {
        throw std::invalid_argument("layernorm_rows: gamma/beta size mismatch");
    }
    Tensor out({N, M});
    Tensor xhat({N, M});
    Tensor inv_sigma({N});
    for (std::int64_t r = 0; r < N; ++r) {
        const double* xr = x->value.data.data() + r * M;
        double mu = 0.0;
        for (std::int64_t c = 0; c < M; ++c) mu += xr[c];
        mu /= double(M);
        double var = 0.0;
        for (std::int64_t c = 0; c < M; ++c) var += (xr[c] - mu) * (xr[c] - mu);
        var /= double(M);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_sigma.data[std::size_t(r)] = is;
        for (std::int64_t c = 0; c < M; ++c) {
            const double h = (xr[c] - mu) * is;
            xhat.data[std::size_t(r * M + c)] = h;
            out.data[std::size_t(r * M + c)] = gamma->value.data[std::size_t(c)] * h + beta->value.data[std::size_t(c)];
        }
    }
    return make_node(std::move(out), {x, gamma, beta},
                     [xhat = std::move(xhat), inv_sigma = std::move(inv_sigma), N, M](Node& n) {
        auto& px = n.parents[0];
        auto& pg = n.parents[1];
        auto& pb = n.parents[2];
        if (pg->requires_grad) {
            pg->ensure_grad();
            for (std::int64_t r = 0; r < N; ++r)
                for (std::int64_t c = 0; c < M; ++c)
                    pg->grad.data[std::size_t(c)] +=
                        n.grad.data[std::size_t(r * M + c)] * xhat.data[std::size_t(r * M + c)];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (std::int64_t r = 0; r < N; ++r)
                for (std::int64_t c = 0; c < M; ++c)
                    pb->grad.data[std::size_t(c)] += n.grad.data[std::size_t(r * M + c)];
        }
        if (px->requires_grad) {
            px->ensure_grad();
            for (std::int64_t r = 0; r < N; ++r) {
                const double is = inv_sigma.data[std::size_t(r)];
                double mean_g = 0.0, mean_gx = 0.0;
                for (std::int64_t c = 0; c < M; ++c) {
                    const double g = n.grad.data[std::size_t(r * M + c)] * pg->value.data[std::size_t(c)];
                    mean_g += g;
                    mean_gx += g * xhat.data[std::size_t(r * M + c)];
                }
                mean_g /= double(M);
                mean_gx /= double(M);
                for (std::int64_t c = 0; c < M; ++c) {
                    const double g = n.grad.data[std::size_t(r * M + c)] * pg->value.data[std::size_t(c)];
                    px->grad.data[std::size_t(r * M + c)] +=
                        is * (g - mean_g - xhat.data[std::size_t(r * M + c)] * mean_gx);
                }
            }
        }
    });
}

Var slice_rows(const Var& a, std::int64_t r0, std::int64_t r1) {
    if (a->value.rank() != 2) throw std::invalid_argument("slice_rows: rank-2 required");
    const std::int64_t N = a->value.dim(0), M = a->value.dim(1);
    if (r0 < 0 || r1 > N || r0 >= r1) throw std::invalid_argument("slice_rows: bad range");
    Tensor out({r1 - r0, M});
    std::copy(a->value.data.begin() + r0 * M, a->value.data.begin() + r1 * M, out.data.begin());
    return make_node(std::move(out), {a}, [r0, M](Node& n) {
        auto& p = n.parents[0];
        p->ensure_grad();
        for (std::size_t i = 0; i < n.grad.data.size(); ++i)
            p->grad.data[std::size_t(r0 * M) + i] += n.grad.data[i];
    });
}

Var slice_cols(const Var& a, std::int64_t c0, std::int64_t c1) {
    if (a->value.rank() != 2) throw std::invalid_argument("slice_cols: rank-2 required");
    const std::int64_t N = a->value.dim(0), M = a->value.dim(1);
    if (c0 < 0 || c1 > M || c0 >= c1) throw std::invalid_argument("slice_cols: bad range");
    const std::int64_t W = c1 - c0;
    Tensor out({N, W});
    for (std::int64_t r = 0; r < N; ++r)
        std::copy(a->value.data.begin() + r * M + c0, a->value.data.begin() + r * M + c1,
                  out.data.begin() + r * W);
    return make_node(std::move(out), {a}, [c0, M, W, N](Node& n) {
        auto& p = n.parents[0];
        p->ensure_grad();
        for (std::int64_t r = 0; r < N; ++r)
            for (std::int64_t c = 0; c < W; ++c)
                p->grad.data[std::size_t(r * M + c0 + c)] += n.grad.data[std::size_t(r * W + c)];
    });
}

Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
    const std::int64_t M = parts[0]->value.dim(1);
    std::int64_t N = 0;
    for (const auto& p : parts) {
        if (p->value.rank() != 2 || p->value.dim(1) != M)
            throw std::invalid_argument("concat_rows: column mismatch");
        N += p->value.dim(0);
    }
    Tensor out({N, M});
    std::int64_t r = 0;
    std::vector<std::int64_t> offsets;
    for (const auto& p : parts) {
        offsets.push_back(r * M);
        std::copy(p->value.data.begin(), p->value.data.end(), out.data.begin() + r * M);
        r += p->value.dim(0);
    }
    return make_node(std::move(out), parts, [offsets](Node& n) {
        for (std::size_t k = 0; k < n.parents.size(); ++k) {
            auto& p = n.parents[k];
            if (!p->requires_grad) continue;
            p->ensure_grad();
            const std::int64_t off = offsets[k];
            for (std::size_t i = 0; i < p->grad.data.size(); ++i)
                p->grad.data[i] += n.grad.data[std::size_t(off) + i];
        }
    });
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
    const std::int64_t N = parts[0]->value.dim(0);
    std::int64_t M = 0;
    for (const auto& p : parts) {
        if (p->value.rank() != 2 || p->value.dim(0) != N)
            throw std::invalid_argument("concat_cols: row mismatch");
        M += p->value.dim(1);
    }
    Tensor out({N, M});
    std::vector<std::int64_t> offsets;
    std::int64_t off = 0;
    for (const auto& p : parts) {
        offsets.push_back(off);
        const std::int64_t w = p->value.dim(1);
        for (std::int64_t r = 0; r < N; ++r)
            std::copy(p->value.data.begin() + r * w, p->value.data.begin() + (r + 1) * w,
                      out.data.begin() + r * M + off);
        off += w;
    }
    return make_node(std::move(out), parts, [offsets, N, M](Node& n) {
        for (std::size_t k = 0; k < n.parents.size(); ++k) {
            auto& p = n.parents[k];
            if (!p->requires_grad) continue;
            p->ensure_grad();
            const std::int64_t w = p->value.dim(1);
            const std::int64_t off_k = offsets[k];
            for (std::int64_t r = 0; r < N; ++r)
                for (std::int64_t c = 0; c < w; ++c)
                    p->grad.data[std::size_t(r * w + c)] += n.grad.data[std::size_t(r * M + off_k + c)];
        }
    });
}

Var chw_to_tokens(const Var& x) {
    if (x->value.rank() != 3) throw std::invalid_argument("chw_to_tokens: CHW required");
    const std::int64_t C = x->value.dim(0), H = x->value.dim(1), W = x->value.dim(2);
    Tensor out({H * W, C});
    for (std::int64_t c = 0; c < C; ++c)
        for (std::int64_t p = 0; p < H * W; ++p)
            out.data[std::size_t(p * C + c)] = x->value.data[std::size_t(c * H * W + p)];
    return make_node(std::move(out), {x}, [C, H, W](Node& n) {
        auto& px = n.parents[0];
        px->ensure_grad();
        for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t p = 0; p < H * W; ++p)
                px->grad.data[std::size_t(c * H * W + p)] += n.grad.data[std::size_t(p * C + c)];
    });
}

Var tokens_to_chw(const Var& t, std::int64_t C, std::int64_t H, std::int64_t W) {
    if (t->value.rank() != 2 || t->value.dim(0) != H * W || t->value.dim(1) != C)
        throw std::invalid_argument("tokens_to_chw: need [H*W, C]");
    Tensor out({C, H, W});
    for (std::int64_t c = 0; c < C; ++c)
        for (std::int64_t p = 0; p < H * W; ++p)
            out.data[std::size_t(c * H * W + p)] = t->value.data[std::size_t(p * C + c)];
    return make_node(std::move(out), {t}, [C, H, W](Node& n) {
        auto& pt = n.parents[0];
        pt->ensure_grad();
        for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t p = 0; p < H * W; ++p)
                pt->grad.data[std::size_t(p * C + c)] += n.grad.data[std::size_t(c * H * W + p)];
    });
}

Var reshape(const Var& a, std::vector<std::int64_t> shape) {
    if (Tensor::numel_of(shape) != a->value.numel())
        throw std::invalid_argument("reshape: element count mismatch");
    Tensor out = a->value;
    out.shape = std::move(shape);
    return make_node(std::move(out), {a}, [](Node& n) {
        auto& p = n.parents[0];
        p->ensure_grad();
        for (std::size_t i = 0; i < n.grad.data.size(); ++i) p->grad.data[i] += n.grad.data[i];
    });
}

Var sum(const Var& a) {
    double s = 0.0;
    for (double x : a->value.data) s += x;
    Tensor out({1});
    out.data[0] = s;
    return make_node(std::move(out), {a}, [](Node& n) {
        auto& p = n.parents[0];
        p->ensure_grad();
        const double g = n.grad.data[0];
        for (auto& x : p->grad.data) x += g;
    });
}

Var mean(const Var& a) { return scale(sum(a), 1.0 / double(a->value.numel())); }

Var mse_loss(const Var& a, const Tensor& target) {
    if (!a->value.same_shape(target)) throw std::invalid_argument("mse_loss: shape mismatch");
    const double inv_n = 1.0 / double(a->value.numel());
    double s = 0.0;
    for (std::size_t i = 0; i < a->value.data.size(); ++i) {
        const double d = a->value.data[i] - target.data[i];
        s += d * d;
    }
    Tensor out({1});
    out.data[0] = s * inv_n;
    Tensor t = target;
    return make_node(std::move(out), {a}, [t = std::move(t), inv_n](Node& n) {
        auto& p = n.parents[0];
        p->ensure_grad();
        const double g = n.grad.data[0];
        for (std::size_t i = 0; i < p->grad.data.size(); ++i)
            p->grad.data[i] += g * 2.0 * inv_n * (p->value.data[i] - t.data[i]);
    });
}

Var l1_loss(const Var& a, const Tensor& target) {
    if (!a->value.same_shape(target)) throw std::invalid_argument("l1_loss: shape mismatch");
    const double inv_n = 1.0 / double(a->value.numel());
    double s = 0.0;
    for (std::size_t i = 0; i < a->value.data.size(); ++i) s += std::abs(a->value.data[i] - target.data[i]);
    Tensor out({1});
    out.data[0] = s * inv_n;
    Tensor t = target;
    return make_node(std::move(out), {a}, [t = std::move(t), inv_n](Node& n) {
        auto& p = n.parents[0];
        p->ensure_grad();
        const double g = n.grad.data[0];
        for (std::size_t i = 0; i < p->grad.data.size(); ++i) {
            const double d = p->value.data[i] - t.data[i];
            p->grad.data[i] += g * inv_n * (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0));
        }
    });
}

namespace {
Var weighted_loss(const Var& a, const Tensor& target, const Tensor& weight, bool squared) {
    if (!a->value.same_shape(target) || !a->value.same_shape(weight))
        throw std::invalid_argument("weighted loss: shape mismatch");
    double wsum = 0.0;
    for (double w : weight.data) wsum += w;
    const double denom = std::max(wsum, 1e-12);
    double s = 0.0;
    for (std::size_t i = 0; i < a->value.data.size(); ++i) {
        const double d = a->value.data[i] - target.data[i];
        s += weight.data[i] * (squared ? d * d : std::abs(d));
    }
    Tensor out({1});
    out.data[0] = s / denom;
    Tensor t = target, w = weight;
    return make_node(std::move(out), {a},
                     [t = std::move(t), w = std::move(w), denom, squared](Node& n) {
        auto& p = n.parents[0];
        p->ensure_grad();
        const double g = n.grad.data[0] / denom;
        for (std::size_t i = 0; i < p->grad.data.size(); ++i) {
            const double d = p->value.data[i] - t.data[i];
            const double dd = squared ? 2.0 * d : (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0));
            p->grad.data[i] += g * w.data[i] * dd;
        }
    });
}
}  // namespace

Var mse_loss_weighted(const Var& a, const Tensor& target, const Tensor& weight) {
    return weighted_loss(a, target, weight, true);
}
Var l1_loss_weighted(const Var& a, const Tensor& target, const Tensor& weight) {
    return weighted_loss(a, target, weight, false);
}

// --- conv stack ---

namespace {
struct ConvDims {
    std::int64_t cin, h, w, cout, kh, kw, ho, wo;
    int stride, pad;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride, int pad) {
    if (x.rank() != 3 || w.rank() != 4) throw std::invalid_argument("conv2d: x must be CHW, w must be OIKK");
    ConvDims d;
    d.cin = x.dim(0);
    d.h = x.dim(1);
    d.w = x.dim(2);
    d.cout = w.dim(0);
    d.kh = w.dim(2);
    d.kw = w.dim(3);
    if (w.dim(1) != d.cin) throw std::invalid_argument("conv2d: channel mismatch");
    d.stride = stride;
    d.pad = pad;
    d.ho = (d.h + 2 * pad - d.kh) / stride + 1;
    d.wo = (d.w + 2 * pad - d.kw) / stride + 1;
    return d;
}

// cols: [ho*wo, cin*kh*kw]
Tensor im2col(const Tensor& x, const ConvDims& d) {
    Tensor cols({d.ho * d.wo, d.cin * d.kh * d.kw});
    std::int64_t row = 0;
    for (std::int64_t oy = 0; oy < d.ho; ++oy) {
        for (std::int64_t ox = 0; ox < d.wo; ++ox, ++row) {
            double* dst = cols.data.data() + row * (d.cin * d.kh * d.kw);
            for (std::int64_t c = 0; c < d.cin; ++c) {
                for (std::int64_t ky = 0; ky < d.kh; ++ky) {
                    const std::int64_t iy = oy * d.stride + ky - d.pad;
                    for (std::int64_t kx = 0; kx < d.kw; ++kx) {
                        const std::int64_t ix = ox * d.stride + kx - d.pad;
                        double v = 0.0;
                        if (iy >= 0 && iy < d.h && ix >= 0 && ix < d.w)
                            v = x.data[std::size_t((c * d.h + iy) * d.w + ix)];
                        *dst++ = v;
                    }
                }
            }
        }
    }
    return cols;
}

void col2im_acc(const Tensor& cols, const ConvDims& d, Tensor& dx) {
    std::int64_t row = 0;
    for (std::int64_t oy = 0; oy < d.ho; ++oy) {
        for (std::int64_t ox = 0; ox < d.wo; ++ox, ++row) {
            const double* src = cols.data.data() + row * (d.cin * d.kh * d.kw);
            for (std::int64_t c = 0; c < d.cin; ++c) {
                for (std::int64_t ky = 0; ky < d.kh; ++ky) {
                    const std::int64_t iy = oy * d.stride + ky - d.pad;
                    for (std::int64_t kx = 0; kx < d.kw; ++kx) {
                        const std::int64_t ix = ox * d.stride + kx - d.pad;
                        const double v = *src++;
                        if (iy >= 0 && iy < d.h && ix >= 0 && ix < d.w)
                            dx.data[std::size_t((c * d.h + iy) * d.w + ix)] += v;
                    }
                }
            }
        }
    }
}
}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    const ConvDims d = conv_dims(x->value, w->value, stride, pad);
    if (b->value.numel() != d.cout) throw std::invalid_argument("conv2d: bias size mismatch");
    Tensor cols = im2col(x->value, d);
    Tensor out({d.cout, d.ho, d.wo});
    {
        auto C = as_mat(cols, d.ho * d.wo, d.cin * d.kh * d.kw);
        auto W = as_mat(w->value, d.cout, d.cin * d.kh * d.kw);
        MatRM Y = C * W.transpose();  // [ho*wo, cout]
        for (std::int64_t p = 0; p < d.ho * d.wo; ++p)
            for (std::int64_t oc = 0; oc < d.cout; ++oc)
                out.data[std::size_t(oc * d.ho * d.wo + p)] = Y(p, oc) + b->value.data[std::size_t(oc)];
    }
    return make_node(std::move(out), {x, w, b}, [d, cols = std::move(cols)](Node& n) {
        auto& px = n.parents[0];
        auto& pw = n.parents[1];
        auto& pb = n.parents[2];
        // regroup grad to [ho*wo, cout]
        Tensor gmat({d.ho * d.wo, d.cout});
        for (std::int64_t oc = 0; oc < d.cout; ++oc)
            for (std::int64_t p = 0; p < d.ho * d.wo; ++p)
                gmat.data[std::size_t(p * d.cout + oc)] = n.grad.data[std::size_t(oc * d.ho * d.wo + p)];
        auto G = as_mat(gmat, d.ho * d.wo, d.cout);
        auto C = as_mat(cols, d.ho * d.wo, d.cin * d.kh * d.kw);
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (std::int64_t oc = 0; oc < d.cout; ++oc) {
                double s = 0.0;
                for (std::int64_t p = 0; p < d.ho * d.wo; ++p) s += gmat.data[std::size_t(p * d.cout + oc)];
                pb->grad.data[std::size_t(oc)] += s;
            }
        }
        if (pw->requires_grad) {
            pw->ensure_grad();
            auto dW = as_mat(pw->grad, d.cout, d.cin * d.kh * d.kw);
            dW.noalias() += G.transpose() * C;
        }
        if (px->requires_grad) {
            px->ensure_grad();
            Tensor dcols({d.ho * d.wo, d.cin * d.kh * d.kw});
            auto DC = as_mat(dcols, d.ho * d.wo, d.cin * d.kh * d.kw);
            auto W = as_mat(pw->value, d.cout, d.cin * d.kh * d.kw);
            DC.noalias() = G * W;
            col2im_acc(dcols, d, px->grad);
        }
    });
}

Var upsample_nearest2x(const Var& x) {
    if (x->value.rank() != 3) throw std::invalid_argument("upsample_nearest2x: CHW required");
    const std::int64_t C = x->value.dim(0), H = x->value.dim(1), W = x->value.dim(2);
    Tensor out({C, 2 * H, 2 * W});
    for (std::int64_t c = 0; c < C; ++c)
        for (std::int64_t y = 0; y < 2 * H; ++y)
            for (std::int64_t xx = 0; xx < 2 * W; ++xx)
                out.data[std::size_t((c * 2 * H + y) * 2 * W + xx)] =
                    x->value.data[std::size_t((c * H + y / 2) * W + xx / 2)];
    return make_node(std::move(out), {x}, [C, H, W](Node& n) {
        auto& p = n.parents[0];
        p->ensure_grad();
        for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t y = 0; y < 2 * H; ++y)
                for (std::int64_t xx = 0; xx < 2 * W; ++xx)
                    p->grad.data[std::size_t((c * H + y / 2) * W + xx / 2)] +=
                        n.grad.data[std::size_t((c * 2 * H + y) * 2 * W + xx)];
    });
}

Var concat_channels(const Var& a, const Var& b) {
    if (a->value.rank() != 3 || b->value.rank() != 3 || a->value.dim(1) != b->value.dim(1) ||
        a->value.dim(2) != b->value.dim(2)) {
        throw std::invalid_argument("concat_channels: spatial dims must match");
    }
    const std::int64_t Ca = a->value.dim(0), Cb = b->value.dim(0);
    const std::int64_t H = a->value.dim(1), W = a->value.dim(2);
    Tensor out({Ca + Cb, H, W});
    std::copy(a->value.data.begin(), a->value.data.end(), out.data.begin());
    std::copy(b->value.data.begin(), b->value.data.end(), out.data.begin() + Ca * H * W);
    return make_node(std::move(out), {a, b}, [Ca, Cb, H, W](Node& n) {
        auto& pa = n.parents[0];
        auto& pb = n.parents[1];
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (std::int64_t i = 0; i < Ca * H * W; ++i)
                pa->grad.data[std::size_t(i)] += n.grad.data[std::size_t(i)];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (std::int64_t i = 0; i < Cb * H * W; ++i)
                pb->grad.data[std::size_t(i)] += n.grad.data[std::size_t(Ca * H * W + i)];
        }
    });
}

void backward(const Var& loss) {
    if (loss->value.numel() != 1) throw std::invalid_argument("backward: loss must be scalar");
    if (!loss->requires_grad) return;
    // iterative post-order topo sort
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(loss.get(), 0);
    visited.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* parent = node->parents[idx].get();
            ++idx;
            if (parent->requires_grad && !visited.count(parent)) {
                visited.insert(parent);
                stack.emplace_back(parent, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    loss->ensure_grad();
    loss->grad.data[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && !n->grad.data.empty()) n->backward_fn(*n);
    }
}

Var ParamStore::add(const std::string& name, Tensor init) {
    for (const auto& [k, v] : items_) {
        if (k == name) throw std::invalid_argument("ParamStore: duplicate name " + name);
    }
    auto v = make_param(std::move(init));
    items_.emplace_back(name, v);
    return v;
}

const Var& ParamStore::get(const std::string& name) const {
    for (const auto& [k, v] : items_) {
        if (k == name) return v;
    }
    throw std::invalid_argument("ParamStore: unknown name " + name);
}

bool ParamStore::has(const std::string& name) const {
    for (const auto& [k, v] : items_) {
        if (k == name) return true;
    }
    return false;
}

void ParamStore::zero_grad() {
    for (auto& [k, v] : items_) v->zero_grad();
}

std::int64_t ParamStore::param_count() const {
    std::int64_t n = 0;
    for (const auto& [k, v] : items_) n += v->value.numel();
    return n;
}

void ParamStore::set_trainable(bool trainable) {
    for (auto& [k, v] : items_) v->requires_grad = trainable;
}

}  // namespace asuka::core
