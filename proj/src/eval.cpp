// Copyright 2026 The vaerepa Authors.
// SPDX-License-Identifier: Apache-2.0

#include "vaerepa/eval.hpp"

#include <algorithm>
#include <cmath>

namespace vaerepa::eval {

namespace {

// Symmetric PSD square root, clamping tiny negative eigenvalues.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, const char* what) {
    const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    require(es.info() == Eigen::Success, ErrorKind::Numeric, "{}: eigendecomposition failed", what);
    Eigen::VectorXd ev = es.eigenvalues();
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        require(ev(i) > -kPsdTolerance, ErrorKind::Numeric, "{} is not positive semi-definite (eigenvalue {})", what,
                ev(i));
        ev(i) = std::sqrt(std::max(ev(i), 0.0));
    }
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

Moments moments(const Eigen::MatrixXd& x) {
    const auto n = x.rows(), d = x.cols();
    require(d >= 1 && n >= d + 1, ErrorKind::Config, "need at least {} samples of dimension {}, got {}", d + 1, d, n);
    Moments m;
    m.mean = x.colwise().mean().transpose();
    const Eigen::MatrixXd c = x.rowwise() - m.mean.transpose();
    m.cov = (c.transpose() * c) / double(n - 1);
    require(m.mean.allFinite() && m.cov.allFinite(), ErrorKind::Numeric, "non-finite feature moments");
    return m;
}

double frechet_distance(const Moments& a, const Moments& b) {
    require(a.mean.size() == b.mean.size(), ErrorKind::Shape, "feature dimensions differ: {} vs {}", a.mean.size(),
            b.mean.size());
    // Tr((S_a S_b)^(1/2)) = Tr((S_a^(1/2) S_b S_a^(1/2))^(1/2)); the inner matrix is symmetric PSD.
    const Eigen::MatrixXd ra = psd_sqrt(a.cov, "covariance A");
    const Eigen::MatrixXd inner = ra * b.cov * ra;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
    require(es.info() == Eigen::Success, ErrorKind::Numeric, "eigendecomposition failed");
    double tr_sqrt = 0.0;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
        const double ev = es.eigenvalues()(i);
        require(ev > -kPsdTolerance, ErrorKind::Numeric, "covariance product has eigenvalue {}", ev);
        tr_sqrt += std::sqrt(std::max(ev, 0.0));
    }
    const double fd = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * tr_sqrt;
    return std::max(fd, 0.0);
}

double toy_fid(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return frechet_distance(moments(a), moments(b)); }

Eigen::MatrixXd as_matrix(std::span<const float> data, std::size_t n, std::size_t d) {
    require(data.size() == n * d, ErrorKind::Shape, "{} values do not form {} x {}", data.size(), n, d);
    Eigen::MatrixXd m(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) m(i, j) = data[i * d + j];
    return m;
}

Eigen::MatrixXd as_matrix(std::span<const double> data, std::size_t n, std::size_t d) {
    require(data.size() == n * d, ErrorKind::Shape, "{} values do not form {} x {}", data.size(), n, d);
    Eigen::MatrixXd m(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) m(i, j) = data[i * d + j];
    return m;
}

Tensor<float> token_map(const Tensor<float>& tokens, std::size_t gh, std::size_t gw) {
    require(tokens.rank() == 2 && tokens.dim(0) == gh * gw, ErrorKind::Shape, "token_map: shape {} is not [{}, D]",
            shape_str(tokens.shape()), gh * gw);
    const std::size_t d = tokens.dim(1);
    Tensor<float> out({d, gh, gw});
    for (std::size_t p = 0; p < gh * gw; ++p)
        for (std::size_t c = 0; c < d; ++c) out[c * gh * gw + p] = tokens[p * d + c];
    return out;
}

PcaResult pca_viz(const std::vector<Tensor<float>>& maps) {
    require(!maps.empty(), ErrorKind::Config, "pca_viz: no feature maps");
    const std::size_t c = maps[0].dim(0);
    std::size_t positions = 0;
    for (const auto& m : maps) {
        require(m.rank() == 3 && m.dim(0) == c, ErrorKind::Shape, "pca_viz: map of shape {} does not have {} channels",
                shape_str(m.shape()), c);
        positions += m.dim(1) * m.dim(2);
    }
    require(positions >= 3, ErrorKind::Config, "pca_viz needs at least 3 spatial positions, got {}", positions);

    Eigen::MatrixXd x(positions, c);
    std::size_t row = 0;
    for (const auto& m : maps) {
        const std::size_t hw = m.dim(1) * m.dim(2);
        for (std::size_t p = 0; p < hw; ++p, ++row)
            for (std::size_t ch = 0; ch < c; ++ch) x(row, ch) = m[ch * hw + p];
    }
    const Eigen::RowVectorXd mean = x.colwise().mean();
    x.rowwise() -= mean;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(x.transpose() * x / double(positions));

    PcaResult res;
    const std::size_t k = std::min<std::size_t>(3, c);
    if (k < 3) res.warnings.push_back(fmt::format("only {} feature channels; missing components are gray", c));
    Eigen::MatrixXd comps(c, k);
    for (std::size_t i = 0; i < k; ++i) {
        Eigen::VectorXd v = es.eigenvectors().col(Eigen::Index(c - 1 - i));
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0) v = -v;
        comps.col(Eigen::Index(i)) = v;
    }
    const Eigen::MatrixXd proj = x * comps;
    std::vector<double> lo(3, 0.0), hi(3, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
        lo[i] = proj.col(Eigen::Index(i)).minCoeff();
        hi[i] = proj.col(Eigen::Index(i)).maxCoeff();
    }

    row = 0;
    for (const auto& m : maps) {
        RgbImage img;
        img.width = m.dim(2);
        img.height = m.dim(1);
        img.rgb.assign(img.width * img.height * 3, 128);
        for (std::size_t p = 0; p < img.width * img.height; ++p, ++row) {
            for (std::size_t i = 0; i < k; ++i) {
                const double span = hi[i] - lo[i];
                if (span <= 1e-12) continue;
                const double u = (proj(Eigen::Index(row), Eigen::Index(i)) - lo[i]) / span;
                img.rgb[p * 3 + i] = static_cast<std::uint8_t>(std::lround(std::clamp(u, 0.0, 1.0) * 255.0));
            }
        }
        res.images.push_back(std::move(img));
    }
    return res;
}

FlopReport flop_report(const backbone::BackboneConfig& b, const alignment::ProjectorConfig& p, std::size_t batch) {
    b.validate();
    p.validate();
    const std::uint64_t t = b.tokens(), d = b.dim, n = b.depth;
    FlopReport r;
    r.batch = batch;
    r.patch_embed = t * b.token_dim() * d;
    r.time_embed = b.time_freq_dim * d + d * d;
    r.adaln = n * d * 6 * d + d * 2 * d;
    r.qkv = n * t * d * 3 * d;
    r.attention = n * 2 * t * t * d;  // scores and weighted values
    r.attn_proj = n * t * d * d;
    r.mlp = n * 2 * t * d * 4 * d;
    r.final_layer = t * d * b.token_dim();
    r.projector = t * p.weight_count();
    r.backbone_params = backbone::count_params(b);
    r.projector_params = p.param_count();
    r.external_params = 0;
    return r;
}

KvConfig MetricsReport::to_kv() const {
    KvConfig kv;
    kv.set("toy_fid", fmt::format("{}", toy_fid));
    kv.set("sample_count", std::to_string(sample_count));
    kv.set("reference_count", std::to_string(reference_count));
    kv.set("feature_dim", std::to_string(feature_dim));
    kv.set("batch", std::to_string(flops.batch));
    kv.set("backbone_flops", std::to_string(flops.backbone_flops()));
    kv.set("projector_flops", std::to_string(flops.projector_flops()));
    kv.set("total_flops", std::to_string(flops.total_flops()));
    kv.set("overhead_fraction", fmt::format("{}", flops.overhead()));
    kv.set("backbone_params", std::to_string(flops.backbone_params));
    kv.set("projector_params", std::to_string(flops.projector_params));
    kv.set("external_params", std::to_string(flops.external_params));
    kv.set("seconds_per_step", fmt::format("{}", seconds_per_step));
    return kv;
}

}  // namespace vaerepa::eval
