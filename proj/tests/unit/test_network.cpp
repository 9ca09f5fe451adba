#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "test_support.hpp"
#include "uwmmse/checkpoint.hpp"
#include "uwmmse/network.hpp"
#include "uwmmse/trainer.hpp"

using namespace uwmmse;
using test_support::random_hpd;
using test_support::random_matrix;
using test_support::random_params;

namespace {

/// Improved variant with X = I and nothing else: every surrogate is the exact inverse.
ModelParams exact_improved(const SystemConfig& c, int layers) {
    ModelParams p = zero_params(c, layers, Variant::improved);
    for (auto& layer : p.layers) {
        for (auto& user : layer.users) {
            user.u.x = identity(c.nr);
            user.w.x = identity(c.d);
            if (layer.has_v_block) user.v.x = identity(c.nt);
        }
    }
    return p;
}

} // namespace

TEST(Parameters, CountMatchesFormula) {
    const SystemConfig c = SystemConfig::make(8, 2, 2, 2);
    const ModelParams p = zero_params(c, 7, Variant::standard);
    EXPECT_EQ(parameter_count(p), model_parameter_count(c, 7));
    // 7*2*(12+12+4) + 6*2*(192+16)
    EXPECT_EQ(model_parameter_count(c, 7), 2888u);
    EXPECT_EQ(parameter_count(zero_params(c, 1, Variant::standard)), model_parameter_count(c, 1));
    const SystemConfig odd = SystemConfig::make(6, 3, 2, 2);
    EXPECT_EQ(parameter_count(zero_params(odd, 4, Variant::standard)), model_parameter_count(odd, 4));
    EXPECT_EQ(model_parameter_count(c, 2) - model_parameter_count(c, 1), layer_parameter_count(c));
}

TEST(Parameters, ImprovedAddsPBlocks) {
    const SystemConfig c = SystemConfig::make(8, 2, 2, 2);
    const ModelParams p = zero_params(c, 3, Variant::improved);
    const std::size_t extra = 3 * 2 * (4 + 4) + 2 * 2 * 64;
    EXPECT_EQ(parameter_count(p), model_parameter_count(c, 3) + extra);
    for (const auto& layer : p.layers) {
        for (const auto& user : layer.users) {
            EXPECT_EQ(user.u.p.rows(), 2);
            EXPECT_EQ(user.w.p.rows(), 2);
            EXPECT_EQ(user.v.p.rows(), layer.has_v_block ? 8 : 0);
        }
    }
    EXPECT_FALSE(p.layers.back().has_v_block);
    EXPECT_TRUE(p.layers.front().has_v_block);
}

TEST(Variant, ParseAndPrint) {
    EXPECT_EQ(parse_variant("improved"), Variant::improved);
    EXPECT_STREQ(to_string(parse_variant("standard")), "standard");
    EXPECT_THROW(parse_variant("other"), DegenerateInput);
}

TEST(InvSurrogate, DiagonalArgumentIsExact) {
    ComplexMatrix a = ComplexMatrix::Zero(3, 3);
    a.diagonal() << 2.0, Complex(1, 1), 5.0;
    const ComplexMatrix zero = ComplexMatrix::Zero(3, 3);
    const ComplexMatrix r = inv_surrogate(a, identity(3), zero, zero, Variant::standard);
    EXPECT_LT((r * a - identity(3)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(InvSurrogate, ScalarTaylorForm) {
    const double a0 = 2.0, a = 2.3;
    const ComplexMatrix y = ComplexMatrix::Constant(1, 1, -1.0 / (a0 * a0));
    const ComplexMatrix z = ComplexMatrix::Constant(1, 1, 2.0 / a0);
    const ComplexMatrix r = inv_surrogate(ComplexMatrix::Constant(1, 1, a), ComplexMatrix::Zero(1, 1), y, z,
                                          Variant::standard);
    EXPECT_NEAR(r(0, 0).real(), 2.0 / a0 - a / (a0 * a0), 1e-15);
}

TEST(InvSurrogate, ImprovedWithIdentityXIsInverse) {
    const ComplexMatrix a = random_hpd(5, 3);
    const ComplexMatrix zero = ComplexMatrix::Zero(5, 5);
    const ComplexMatrix r = inv_surrogate(a, identity(5), zero, zero, Variant::improved, zero);
    EXPECT_LT((a * r - identity(5)).norm(), 1e-10);
    ComplexMatrix singular = a;
    singular.row(4) = singular.row(3);
    EXPECT_THROW(inv_surrogate(singular, identity(5), zero, zero, Variant::improved, zero), SingularMatrix);
    EXPECT_THROW(inv_surrogate(a, identity(4), zero, zero, Variant::standard), ShapeMismatch);
}

TEST(InvSurrogate, ApplyMatchesExplicitMatrix) {
    const ComplexMatrix a = random_hpd(4, 4);
    const ComplexMatrix rhs = random_matrix(4, 2, 5);
    const SurrogateParams p{random_matrix(4, 4, 6), random_matrix(4, 4, 7), random_matrix(4, 4, 8),
                            random_matrix(4, 4, 9)};
    for (Variant v : {Variant::standard, Variant::improved}) {
        const ComplexMatrix explicit_value = inv_surrogate(a, p.x, p.y, p.z, v, p.p) * rhs;
        const SurrogateProducts prod = apply_surrogate(make_surrogate_basis(a, v), p, rhs, v);
        EXPECT_LT((prod.value - explicit_value).norm(), 1e-12 * explicit_value.norm());
    }
}

TEST(NormalizeV, Examples) {
    SystemConfig c = SystemConfig::make(2, 1, 1, 1);
    c.total_power = 1.0;
    const Normalized n = normalize_v({ComplexMatrix::Constant(2, 1, std::sqrt(2.0))}, c);
    EXPECT_DOUBLE_EQ(n.raw_power, 4.0);
    EXPECT_NEAR(n.v[0](0, 0).real(), std::sqrt(2.0) / 2.0, 1e-15);
    const Normalized again = normalize_v(n.v, c);
    EXPECT_NEAR(again.raw_power, 1.0, 1e-15);
    EXPECT_LT((again.v[0] - n.v[0]).norm(), 1e-15);
    EXPECT_THROW(normalize_v({ComplexMatrix::Zero(2, 1)}, c), DegenerateInput);
}

TEST(ForwardLayer, OffsetsOnly) {
    const SystemConfig c = SystemConfig::make(4, 2, 2, 2);
    const ChannelSample s = sample_channel(c, 1);
    ModelParams p = zero_params(c, 2, Variant::standard);
    LayerParams& layer = p.layers[0];
    // W = 0 would make B = 0, which has no diagonal reciprocal; Z_w = I gives W = I.
    for (std::size_t k = 0; k < 2; ++k) {
        layer.users[k].w.z = identity(2);
        layer.users[k].offset_u = random_matrix(2, 2, 10 + k);
        layer.users[k].offset_v = random_matrix(4, 2, 20 + k);
    }
    const LayerTrace t = forward_layer(zf_init(s, c), layer, s, c, Variant::standard);
    const double scale = std::sqrt(c.total_power / (layer.users[0].offset_v.squaredNorm() +
                                                    layer.users[1].offset_v.squaredNorm()));
    for (std::size_t k = 0; k < 2; ++k) {
        EXPECT_EQ(t.u[k], layer.users[k].offset_u);
        EXPECT_EQ(t.w[k], identity(2));
        EXPECT_EQ(t.v_raw[k], layer.users[k].offset_v);
        EXPECT_LT((t.v[k] - scale * layer.users[k].offset_v).norm(), 1e-12);
        EXPECT_EQ(t.u[k].rows(), 2);
        EXPECT_EQ(t.w[k].rows(), 2);
        EXPECT_EQ(t.v[k].rows(), 4);
    }
}

TEST(ForwardLayer, DiagonalCovarianceMatchesWmmseU) {
    // Single user with a zero-forcing precoder: H V is a multiple of I, so A is diagonal.
    const SystemConfig c = SystemConfig::make(4, 2, 2, 1);
    const ChannelSample s = sample_channel(c, 2);
    PrecoderState st;
    st.v = zf_init(s, c);
    ModelParams p = zero_params(c, 1, Variant::standard);
    p.layers[0].users[0].u.x = identity(2);
    const LayerTrace t = forward_layer(st.v, p.layers[0], s, c, Variant::standard);
    const ComplexMatrix& a = t.a[0].arg;
    EXPECT_LT((a - ComplexMatrix(a.diagonal().asDiagonal())).cwiseAbs().maxCoeff(), 1e-10 * a.norm());
    const PrecoderState ref = wmmse_iteration(st, s, c);
    EXPECT_LT((t.u[0] - ref.u[0]).norm(), 1e-10 * ref.u[0].norm());
}

TEST(ForwardPass, ExactSurrogatesReproduceWmmse) {
    const SystemConfig c = SystemConfig::make(6, 2, 2, 3);
    const ChannelSample s = sample_channel(c, 3);
    const int layers = 4;
    const ModelParams p = exact_improved(c, layers);
    ForwardOptions raw;
    raw.normalize_layers = false;
    const ForwardTrace trace = forward_pass(p, s, c, raw);

    PrecoderState ref;
    ref.v = zf_init(s, c);
    for (int l = 0; l < layers; ++l) {
        ref = wmmse_iteration(ref, s, c);
        const LayerTrace& t = trace.layers[static_cast<std::size_t>(l)];
        for (std::size_t k = 0; k < 3; ++k) {
            EXPECT_LT((t.u[k] - ref.u[k]).norm(), 1e-9 * ref.u[k].norm()) << "layer " << l;
            EXPECT_LT((t.w[k] - ref.w[k]).norm(), 1e-9 * ref.w[k].norm()) << "layer " << l;
            EXPECT_LT((t.v_raw[k] - ref.v[k]).norm(), 1e-9 * ref.v[k].norm()) << "layer " << l;
        }
    }
    EXPECT_TRUE(trace.layers.back().exact_v);

    // Normalization does not change the rate, so the normalized network matches too.
    const double normalized_rate = forward_pass(p, s, c).sum_rate;
    EXPECT_NEAR(normalized_rate, sum_rate(ref.v, s, c), 1e-9);
}

TEST(ForwardPass, SingleLayerComposition) {
    const SystemConfig c = SystemConfig::make(4, 2, 2, 2);
    const ChannelSample s = sample_channel(c, 4);
    const ModelParams p = random_params(c, 1, Variant::standard, 5);
    const ForwardTrace trace = forward_pass(p, s, c);
    ASSERT_EQ(trace.layers.size(), 1u);
    LayerTrace manual = forward_layer(zf_init(s, c), p.layers[0], s, c, Variant::standard);
    final_layer_v(manual, s, c);
    for (std::size_t k = 0; k < 2; ++k) EXPECT_EQ(trace.output()[k], manual.v[k]);
}

TEST(FinalLayerV, ScalarFixedPoint) {
    const SystemConfig c = SystemConfig::make(1, 1, 1, 1, 10.0);
    const double p = c.total_power;
    ChannelSample s;
    s.h.push_back(ComplexMatrix::Ones(1, 1));
    LayerTrace t;
    t.u = {ComplexMatrix::Constant(1, 1, std::sqrt(p) / (1.0 + p))};
    t.w = {ComplexMatrix::Constant(1, 1, 1.0 + p)};
    final_layer_v(t, s, c);
    EXPECT_NEAR(t.v[0](0, 0).real(), std::sqrt(p), 1e-12);
    EXPECT_NEAR(t.v_raw[0](0, 0).real(), std::sqrt(p), 1e-12);
}

TEST(FinalLayerV, MatchesWmmseUpdateBitwise) {
    const SystemConfig c = SystemConfig::make(8, 2, 2, 3);
    const ChannelSample s = sample_channel(c, 6);
    PrecoderState st;
    st.v = zf_init(s, c);
    const PrecoderState ref = wmmse_iteration(st, s, c);
    LayerTrace t;
    t.u = ref.u;
    t.w = ref.w;
    final_layer_v(t, s, c);
    for (std::size_t k = 0; k < 3; ++k) {
        EXPECT_EQ(t.v_raw[k], ref.v[k]);
        EXPECT_EQ(t.v[k].rows(), 8);
        EXPECT_EQ(t.v[k].cols(), 2);
    }
}

TEST(ForwardPass, PowerFeasibleEveryLayer) {
    const SystemConfig c = SystemConfig::make(8, 2, 2, 4);
    for (Variant v : {Variant::standard, Variant::improved}) {
        const ModelParams p = random_params(c, 4, v, 7);
        const ForwardTrace trace = forward_pass(p, sample_channel(c, 8), c);
        EXPECT_LT(std::abs(total_power(trace.v0) - c.total_power), 1e-10 * c.total_power);
        for (const auto& t : trace.layers) {
            EXPECT_LT(std::abs(total_power(t.v) - c.total_power), 1e-10 * c.total_power);
            for (const auto& m : t.v) EXPECT_TRUE(all_finite(m));
        }
    }
}

TEST(ForwardPass, Deterministic) {
    const SystemConfig c = SystemConfig::make(4, 2, 2, 2);
    const ModelParams p = random_params(c, 3, Variant::improved, 9);
    const ChannelSample s = sample_channel(c, 10);
    const ForwardTrace a = forward_pass(p, s, c);
    const ForwardTrace b = forward_pass(p, s, c);
    EXPECT_EQ(a.sum_rate, b.sum_rate);
    for (std::size_t k = 0; k < 2; ++k) EXPECT_EQ(a.output()[k], b.output()[k]);
    EXPECT_THROW(forward_pass(ModelParams{c, Variant::standard, {}}, s, c), DegenerateInput);
}

TEST(Checkpoint, RoundTrip) {
    const SystemConfig c = SystemConfig::make(4, 2, 2, 2);
    for (Variant v : {Variant::standard, Variant::improved}) {
        const ModelParams p = random_params(c, 3, v, 11);
        const auto path = std::filesystem::temp_directory_path() / "uwmmse_test_ckpt.iaid";
        save_checkpoint(path, p);
        const ModelParams back = load_checkpoint(path);
        std::filesystem::remove(path);
        EXPECT_EQ(back.config, c);
        EXPECT_EQ(back.variant, v);
        ASSERT_EQ(back.num_layers(), 3);
        std::size_t blocks = 0;
        for_each_block_pair(const_cast<ModelParams&>(back), p, [&](const ComplexMatrix& a, const ComplexMatrix& b) {
            EXPECT_EQ(a, b);
            ++blocks;
        });
        EXPECT_EQ(blocks, v == Variant::improved ? 3u * 2u * 7u + 2u * 2u * 4u + 2u * 3u * 2u + 2u * 2u
                                                 : 3u * 2u * 7u + 2u * 2u * 4u);
    }
}

TEST(Checkpoint, FormatErrors) {
    const SystemConfig c = SystemConfig::make(4, 2, 2, 2);
    std::ostringstream os;
    save_checkpoint(os, random_params(c, 2, Variant::standard, 12));
    const std::string bytes = os.str();

    std::string bad = bytes;
    bad[1] = '?';
    std::istringstream a(bad);
    EXPECT_THROW(load_checkpoint(a), FormatError);

    std::istringstream b(bytes.substr(0, bytes.size() - 16));
    EXPECT_THROW(load_checkpoint(b), FormatError);

    // Variant tag follows magic, version, config (4 u32, P_T, sigma[2], omega[2]) and L.
    std::string bad_variant = bytes;
    bad_variant[4 + 2 + 16 + 8 + 32 + 4] = 7;
    std::istringstream d(bad_variant);
    EXPECT_THROW(load_checkpoint(d), FormatError);

    EXPECT_THROW(load_checkpoint(std::filesystem::path("/nonexistent/model.iaid")), IoError);

    ModelParams wrong = random_params(c, 2, Variant::standard, 13);
    wrong.layers[0].users[0].u.x = ComplexMatrix::Zero(3, 3);
    std::ostringstream sink;
    EXPECT_THROW(save_checkpoint(sink, wrong), ShapeMismatch);
}
