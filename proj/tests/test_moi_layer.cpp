#include <doctest.h>

#include <cmath>

#include "moi/moi_layer.hpp"
#include "moi/rng.hpp"

using moi::Activation;
using moi::Matrix;
using moi::MoiLayerParams;
using moi::NormKind;
using moi::NormLocation;
using moi::Tape;

namespace {

std::vector<double> random_vector(std::size_t n, moi::Rng& rng) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal();
    return v;
}

Matrix random_matrix(std::size_t rows, std::size_t cols, moi::Rng& rng) {
    Matrix m(rows, cols);
    for (double& v : m.data) v = rng.normal();
    return m;
}

MoiLayerParams random_params(std::size_t order, std::size_t d, std::size_t h,
                             std::size_t out, moi::Rng& rng, bool use_bias) {
    MoiLayerParams p;
    for (std::size_t i = 0; i < order; ++i) {
        p.factors.push_back(random_matrix(d, h, rng));
        p.biases.push_back(use_bias ? random_matrix(1, h, rng) : Matrix(1, h, 0.0));
    }
    p.w_out = random_matrix(h, out, rng);
    p.gamma = Matrix(1, h, 1.0);
    p.beta = Matrix(1, h, 0.0);
    p.use_bias = use_bias;
    return p;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    REQUIRE(a.size() == b.size());
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::fabs(a[i] - b[i]));
    return d;
}

}  // namespace

TEST_CASE("hadamard interaction at order 1 is the plain projection") {
    moi::Rng rng(1);
    MoiLayerParams p = random_params(1, 4, 3, 4, rng, true);
    const std::vector<double> x = random_vector(4, rng);
    const std::vector<double> z = hadamard_interaction(p, {x});
    for (std::size_t j = 0; j < 3; ++j) {
        double expect = p.biases[0].at(0, j);
        for (std::size_t i = 0; i < 4; ++i) expect += p.factors[0].at(i, j) * x[i];
        CHECK(z[j] == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("low-rank form equals the materialized full tensor") {
    // The rank-1 identity: the Hadamard product of factor projections must
    // reproduce the exact tensor contraction for every order and size.
    moi::Rng rng(2);
    for (std::size_t k = 1; k <= 3; ++k) {
        for (std::size_t d = 1; d <= 4; ++d) {
            for (std::size_t h = 1; h <= 4; ++h) {
                MoiLayerParams p = random_params(k, d, h, d, rng, false);
                const moi::FullInteractionTensor full = materialize_parafac(p);
                for (int trial = 0; trial < 10; ++trial) {
                    std::vector<std::vector<double>> inputs;
                    for (std::size_t i = 0; i < k; ++i) inputs.push_back(random_vector(d, rng));
                    const std::vector<double> low = hadamard_interaction(p, inputs);
                    const std::vector<double> exact = exact_interaction(full, inputs);
                    CHECK(max_abs_diff(low, exact) < 1e-12);
                }
            }
        }
    }
}

TEST_CASE("materialize_parafac insists on disabled biases") {
    moi::Rng rng(3);
    MoiLayerParams p = random_params(2, 2, 2, 2, rng, true);
    CHECK_THROWS_AS(materialize_parafac(p), moi::InputError);
}

TEST_CASE("bias expansion at order 2 equals the four-term sum") {
    moi::Rng rng(4);
    MoiLayerParams p = random_params(2, 3, 5, 3, rng, true);
    const std::vector<double> x = random_vector(3, rng);
    const std::vector<double> y = random_vector(3, rng);
    const std::vector<double> z = hadamard_interaction(p, {x, y});

    auto project = [&](std::size_t f, const std::vector<double>& in) {
        std::vector<double> out(5, 0.0);
        for (std::size_t j = 0; j < 5; ++j) {
            for (std::size_t i = 0; i < 3; ++i) out[j] += p.factors[f].at(i, j) * in[i];
        }
        return out;
    };
    const std::vector<double> p1 = project(0, x);
    const std::vector<double> p2 = project(1, y);
    for (std::size_t j = 0; j < 5; ++j) {
        const double b1 = p.biases[0].at(0, j), b2 = p.biases[1].at(0, j);
        const double expect = p1[j] * p2[j] + p1[j] * b2 + b1 * p2[j] + b1 * b2;
        CHECK(z[j] == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("bias expansion at order 3 equals the eight-term sum") {
    moi::Rng rng(5);
    MoiLayerParams p = random_params(3, 2, 4, 2, rng, true);
    const std::vector<double> x = random_vector(2, rng);
    const std::vector<double> y = random_vector(2, rng);
    const std::vector<double> w = random_vector(2, rng);
    const std::vector<double> z = hadamard_interaction(p, {x, y, w});

    auto project = [&](std::size_t f, const std::vector<double>& in) {
        std::vector<double> out(4, 0.0);
        for (std::size_t j = 0; j < 4; ++j) {
            for (std::size_t i = 0; i < 2; ++i) out[j] += p.factors[f].at(i, j) * in[i];
        }
        return out;
    };
    const std::vector<double> pr[3] = {project(0, x), project(1, y), project(2, w)};
    for (std::size_t j = 0; j < 4; ++j) {
        double expect = 0.0;
        // sum over every subset: chosen factors contribute projections, the
        // rest their biases — all interaction orders <= 3 at once.
        for (int mask = 0; mask < 8; ++mask) {
            double term = 1.0;
            for (int f = 0; f < 3; ++f) {
                term *= (mask >> f) & 1 ? pr[f][j] : p.biases[f].at(0, j);
            }
            expect += term;
        }
        CHECK(z[j] == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("order 1 with norm off runs the exact MLP computation") {
    moi::Rng rng(6);
    MoiLayerParams p = random_params(1, 6, 4, 6, rng, true);
    p.norm_kind = NormKind::none;
    const std::vector<double> x = random_vector(6, rng);
    const std::vector<double> got = moi_forward(p, x);

    // plain two-matrix MLP through the same kernels
    Matrix proj = moi::add_row_broadcast(
        moi::matmul(Matrix::row_vector(x), p.factors[0]), p.biases[0]);
    const Matrix expect = moi::matmul(moi::gelu(proj), p.w_out);
    for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(std::fabs(got[i] - expect.data[i]) <= 1e-15);
    }
}

TEST_CASE("order 2 with norm off is low-rank bilinear pooling") {
    moi::Rng rng(7);
    MoiLayerParams p = random_params(2, 4, 6, 4, rng, false);
    p.norm_kind = NormKind::none;
    const std::vector<double> x = random_vector(4, rng);
    const std::vector<double> got = moi_forward(p, x);

    // independent loop reference of W_o^T (gelu(W_1^T x) (.) gelu(W_2^T x))
    std::vector<double> expect(4, 0.0);
    for (std::size_t d = 0; d < 4; ++d) {
        for (std::size_t h = 0; h < 6; ++h) {
            double a = 0.0, b = 0.0;
            for (std::size_t i = 0; i < 4; ++i) {
                a += p.factors[0].at(i, h) * x[i];
                b += p.factors[1].at(i, h) * x[i];
            }
            expect[d] += moi::gelu_scalar(a) * moi::gelu_scalar(b) * p.w_out.at(h, d);
        }
    }
    CHECK(max_abs_diff(got, expect) < 1e-12);
}

TEST_CASE("zero input with zero biases and no norm maps to zero") {
    moi::Rng rng(8);
    for (std::size_t k = 1; k <= 3; ++k) {
        MoiLayerParams p = random_params(k, 4, 3, 4, rng, false);
        p.norm_kind = NormKind::none;
        const std::vector<double> out = moi_forward(p, std::vector<double>(4, 0.0));
        for (double v : out) CHECK(v == 0.0);
    }
}

TEST_CASE("scaling the input scales the output by alpha^k exactly") {
    moi::Rng rng(9);
    for (std::size_t k = 1; k <= 4; ++k) {
        MoiLayerParams p = random_params(k, 3, 4, 3, rng, false);
        p.norm_kind = NormKind::none;
        p.activation = Activation::identity;
        const std::vector<double> x = random_vector(3, rng);
        const std::vector<double> base = moi_forward(p, x);
        for (double alpha : {2.0, 0.5, -1.0}) {
            std::vector<double> scaled_x = x;
            for (double& v : scaled_x) v *= alpha;
            const std::vector<double> scaled = moi_forward(p, scaled_x);
            const double factor = std::pow(alpha, static_cast<double>(k));
            for (std::size_t i = 0; i < base.size(); ++i) {
                CHECK(scaled[i] == factor * base[i]);
            }
        }
    }
}

TEST_CASE("plain forward and tape forward agree") {
    moi::Rng rng(10);
    for (NormKind kind : {NormKind::layernorm, NormKind::none, NormKind::l2,
                          NormKind::layer_scale}) {
        for (NormLocation loc : {NormLocation::after_product, NormLocation::before_activation}) {
            MoiLayerParams p = random_params(2, 4, 5, 4, rng, true);
            p.norm_kind = kind;
            p.norm_location = loc;
            if (kind == NormKind::layer_scale) p.gamma = random_matrix(1, 5, rng);
            const Matrix rows = random_matrix(3, 4, rng);
            const Matrix plain = moi_forward_batch(p, rows);

            Tape tape;
            moi::BoundMoiLayer bound =
                bind_moi_layer(p, [&](Matrix& m) { return tape.parameter(m); });
            const Matrix& taped = tape.value(moi_forward_tape(tape, bound, tape.constant(rows)));
            REQUIRE(plain.same_shape(taped));
            for (std::size_t i = 0; i < plain.size(); ++i) {
                CHECK(plain.data[i] == doctest::Approx(taped.data[i]).epsilon(1e-15));
            }
        }
    }
}

TEST_CASE("gradients flow through the full layer with every toggle on") {
    moi::Rng rng(11);
    for (NormKind kind : {NormKind::layernorm, NormKind::l2, NormKind::layer_scale}) {
        MoiLayerParams proto = random_params(3, 3, 4, 3, rng, true);
        proto.norm_kind = kind;
        const Matrix x = random_matrix(2, 3, rng);

        std::vector<Matrix> params;
        for (const Matrix& w : proto.factors) params.push_back(w);
        for (const Matrix& b : proto.biases) params.push_back(b);
        params.push_back(proto.w_out);
        params.push_back(proto.gamma);
        params.push_back(proto.beta);

        auto f = [&](Tape& t, const std::vector<Tape::Var>& vars) {
            MoiLayerParams p = proto;  // toggles only; tensors come from vars
            moi::BoundMoiLayer bound;
            bound.params = &p;
            bound.factors = {vars[0], vars[1], vars[2]};
            bound.biases = {vars[3], vars[4], vars[5]};
            bound.w_out = vars[6];
            bound.gamma = vars[7];
            bound.beta = vars[8];
            return t.sum(moi_forward_tape(t, bound, t.constant(x)));
        };
        CHECK(moi::check_gradient(f, params) < 1e-5);
    }
}

TEST_CASE("spatial gating block") {
    moi::Rng rng(12);
    const std::size_t s = 3, c = 4, h = 5;
    const Matrix x = random_matrix(s, c, rng);
    const Matrix w1 = random_matrix(c, h, rng);
    const Matrix w2 = random_matrix(c, h, rng);
    const Matrix w_o = random_matrix(h, c, rng);

    SUBCASE("identity gate weights reduce to per-row order-2 interaction") {
        Matrix identity(s, s);
        for (std::size_t i = 0; i < s; ++i) identity.at(i, i) = 1.0;
        const Matrix block = gmlp_block(x, w1, w2, identity, w_o);

        MoiLayerParams p;
        p.factors = {w1, w2};
        p.biases = {Matrix(1, h, 0.0), Matrix(1, h, 0.0)};
        p.w_out = w_o;
        p.gamma = Matrix(1, h, 1.0);
        p.beta = Matrix(1, h, 0.0);
        p.use_bias = false;
        p.norm_kind = NormKind::none;
        for (std::size_t row = 0; row < s; ++row) {
            std::vector<double> in(c);
            for (std::size_t j = 0; j < c; ++j) in[j] = x.at(row, j);
            const std::vector<double> expect = moi_forward(p, in);
            for (std::size_t j = 0; j < c; ++j) {
                CHECK(block.at(row, j) == doctest::Approx(expect[j]).epsilon(1e-12));
            }
        }
    }

    SUBCASE("zero gate weights with unit bias pass the left branch through") {
        moi::GmlpBlockParams p;
        p.w1 = w1;
        p.w2 = w2;
        p.w_s = Matrix(s, s, 0.0);
        p.gate_bias = Matrix(1, s, 1.0);
        p.w_o = w_o;
        const Matrix block = gmlp_block(p, x);
        const Matrix expect = moi::matmul(moi::gelu(moi::matmul(x, w1)), w_o);
        for (std::size_t i = 0; i < block.size(); ++i) {
            CHECK(block.data[i] == doctest::Approx(expect.data[i]).epsilon(1e-12));
        }
    }

    SUBCASE("random shapes match the nested-loop reference") {
        const Matrix w_s = random_matrix(s, s, rng);
        const Matrix block = gmlp_block(x, w1, w2, w_s, w_o);
        for (std::size_t i = 0; i < s; ++i) {
            for (std::size_t j = 0; j < c; ++j) {
                double expect = 0.0;
                for (std::size_t hh = 0; hh < h; ++hh) {
                    double left = 0.0;
                    for (std::size_t cc = 0; cc < c; ++cc) left += x.at(i, cc) * w1.at(cc, hh);
                    double gate = 0.0;
                    for (std::size_t r = 0; r < s; ++r) {
                        double inner = 0.0;
                        for (std::size_t cc = 0; cc < c; ++cc) {
                            inner += x.at(r, cc) * w2.at(cc, hh);
                        }
                        gate += w_s.at(i, r) * moi::gelu_scalar(inner);
                    }
                    expect += moi::gelu_scalar(left) * gate * w_o.at(hh, j);
                }
                CHECK(block.at(i, j) == doctest::Approx(expect).epsilon(1e-12));
            }
        }
    }

    SUBCASE("tape and plain block agree, gradients pass") {
        moi::GmlpBlockParams p = moi::GmlpBlockParams::init(s, c, h, 99);
        const Matrix plain = gmlp_block(p, x);
        Tape tape;
        moi::BoundGmlpBlock bound =
            bind_gmlp_block(p, [&](Matrix& m) { return tape.parameter(m); });
        const Matrix& taped = tape.value(gmlp_block_tape(tape, bound, tape.constant(x)));
        for (std::size_t i = 0; i < plain.size(); ++i) {
            CHECK(plain.data[i] == doctest::Approx(taped.data[i]).epsilon(1e-15));
        }

        std::vector<Matrix> params = {p.w1, p.w2, p.w_s, p.gate_bias, p.w_o};
        auto f = [&](Tape& t, const std::vector<Tape::Var>& vars) {
            moi::GmlpBlockParams q = p;
            moi::BoundGmlpBlock b;
            b.params = &q;
            b.w1 = vars[0];
            b.w2 = vars[1];
            b.w_s = vars[2];
            b.gate_bias = vars[3];
            b.w_o = vars[4];
            return t.sum(gmlp_block_tape(t, b, t.constant(x)));
        };
        CHECK(moi::check_gradient(f, params) < 1e-5);
    }
}
