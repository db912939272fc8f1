// Copyright 2026 The vaerepa Authors.
// SPDX-License-Identifier: Apache-2.0

#include "vaerepa/ablate.hpp"

#include <charconv>
#include <fstream>

#include "vaerepa/eval.hpp"
#include "vaerepa/kv_config.hpp"

namespace vaerepa::trainer {

namespace {

constexpr std::uint64_t kTagRun = 0x41424C54;     // "ABLT"
constexpr std::uint64_t kTagSample = 0x4153414D;  // "ASAM"

double parse_real(std::string_view s, std::string_view what) {
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    require(ec == std::errc() && p == s.data() + s.size(), ErrorKind::Config, "{}: `{}` is not a number", what, s);
    return v;
}

std::size_t parse_size(std::string_view s, std::string_view what) {
    std::size_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    require(ec == std::errc() && p == s.data() + s.size(), ErrorKind::Config, "{}: `{}` is not a count", what, s);
    return v;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c == '\n' ? ' ' : c;
    }
    return out + '"';
}

}  // namespace

std::vector<AblationAxis> parse_axes(std::string_view spec) {
    std::vector<AblationAxis> axes;
    for (const std::string& part : split(std::string(spec), ';')) {
        const std::string item = trim(part);
        if (item.empty()) continue;
        const auto colon = item.find(':');
        require(colon != std::string::npos, ErrorKind::Config, "ablation axis `{}` lacks `name:values`", item);
        AblationAxis axis{trim(item.substr(0, colon)), {}};
        require(axis.name == "depth" || axis.name == "range" || axis.name == "objective" || axis.name == "lambda" ||
                    axis.name == "mlp",
                ErrorKind::Config, "unknown ablation axis `{}` (expected depth, range, objective, lambda or mlp)",
                axis.name);
        for (const std::string& v : split(item.substr(colon + 1), ','))
            if (!trim(v).empty()) axis.values.push_back(trim(v));
        require(!axis.values.empty(), ErrorKind::Config, "ablation axis `{}` has no values", axis.name);
        for (const auto& a : axes)
            require(a.name != axis.name, ErrorKind::Config, "ablation axis `{}` given twice", axis.name);
        axes.push_back(std::move(axis));
    }
    return axes;
}

AblateMode parse_ablate_mode(std::string_view s) {
    if (s == "single") return AblateMode::Single;
    if (s == "grid") return AblateMode::Grid;
    fail(ErrorKind::Config, "unknown ablation mode `{}` (expected single or grid)", s);
}

void apply_axis(TrainConfig& cfg, std::string_view name, std::string_view value) {
    if (name == "depth") {
        cfg.align.depth = parse_size(value, "depth");
    } else if (name == "range") {
        const auto dash = value.find('-');
        require(dash != std::string_view::npos, ErrorKind::Config, "range `{}` is not `lo-hi`", value);
        cfg.align.t_lo = parse_real(value.substr(0, dash), "range");
        cfg.align.t_hi = parse_real(value.substr(dash + 1), "range");
    } else if (name == "objective") {
        cfg.align.objective = alignment::parse_objective(value);
    } else if (name == "lambda") {
        cfg.align.lambda = parse_real(value, "lambda");
    } else if (name == "mlp") {
        cfg.proj_layers = parse_size(value, "mlp");
    } else {
        fail(ErrorKind::Config, "unknown ablation axis `{}`", name);
    }
}

std::vector<AblationRun> expand_axes(const std::vector<AblationAxis>& axes, AblateMode mode) {
    std::vector<AblationRun> runs;
    if (axes.empty()) return {AblationRun{"base", "-", {}}};
    if (mode == AblateMode::Single) {
        for (const auto& a : axes)
            for (const auto& v : a.values) runs.push_back({a.name, v, {{a.name, v}}});
        return runs;
    }
    std::vector<std::size_t> idx(axes.size(), 0);
    while (true) {
        AblationRun r{"grid", "", {}};
        for (std::size_t i = 0; i < axes.size(); ++i) {
            r.settings.emplace_back(axes[i].name, axes[i].values[idx[i]]);
            r.value += (i ? ";" : "") + axes[i].name + "=" + axes[i].values[idx[i]];
        }
        runs.push_back(std::move(r));
        std::size_t i = axes.size();
        while (i > 0) {
            --i;
            if (++idx[i] < axes[i].values.size()) break;
            idx[i] = 0;
            if (i == 0) return runs;
        }
    }
}

std::vector<AblationRow> ablate(const TrainConfig& base, const std::vector<AblationAxis>& axes, AblateMode mode,
                                const vae::FeatureCache& train, const vae::FeatureCache& reference,
                                const AblationOptions& opt) {
    const auto runs = expand_axes(axes, mode);
    std::vector<AblationRow> rows;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        AblationRow row;
        row.run = i;
        row.axis = runs[i].axis;
        row.value = runs[i].value;
        row.cfg = base;
        row.cfg.seed = derive_seed(base.seed, kTagRun, i);
        row.cfg.backbone.seed = row.cfg.seed;
        try {
            for (const auto& [k, v] : runs[i].settings) apply_axis(row.cfg, k, v);
            Trainer tr(row.cfg, train);
            while (tr.steps_done() < row.cfg.iters) row.final_losses = tr.step();
            const backbone::Backbone<float> model = tr.ema_model();
            const sampler::NetworkField field(model, opt.sample.cfg_scale);
            sampler::SampleConfig sc = opt.sample;
            sc.seed = derive_seed(row.cfg.seed, kTagSample);
            const auto labels = sampler::resolve_labels(sc, row.cfg.backbone.classes, row.cfg.backbone.null_label());
            const Tensor<double> gen = sampler::sample(field, sc, labels);
            const std::size_t d = reference.latent_size();
            row.toy_fid = eval::toy_fid(eval::as_matrix(gen.span(), sc.count, d),
                                        eval::as_matrix(std::span<const float>(reference.latents), reference.count(), d));
            row.ok = true;
        } catch (const std::exception& e) {
            row.ok = false;
            row.message = e.what();
        }
        if (opt.on_row) opt.on_row(row);
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path);
    require(static_cast<bool>(os), ErrorKind::Io, "cannot write {}", path.string());
    os << "run,axis,value,seed,align_depth,t_lo,t_hi,objective,lambda,proj_layers,iters,l_phi,l_align,l_total,"
          "toy_fid,status,message\n";
    for (const auto& r : rows) {
        const auto& c = r.cfg;
        os << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", r.run, csv_field(r.axis),
                          csv_field(r.value), c.seed, c.align.depth, c.align.t_lo, c.align.t_hi,
                          alignment::objective_name(c.align.objective), c.align.lambda, c.proj_layers, c.iters,
                          r.final_losses.phi, r.final_losses.align, r.final_losses.total,
                          r.ok ? fmt::format("{}", r.toy_fid) : std::string(), r.ok ? "ok" : "failed",
                          csv_field(r.message));
    }
    require(static_cast<bool>(os), ErrorKind::Io, "failed writing {}", path.string());
}

}  // namespace vaerepa::trainer
