#include "cred/flops.hpp"

#include <cstdio>
#include <sstream>
#include <tuple>

namespace cred::flops {

namespace {

std::size_t round_up(std::size_t v, std::size_t m) { return (v + m - 1) / m * m; }

}  // namespace

Macs attention_flops(std::size_t n_q, std::size_t n_kv, std::size_t width, std::size_t /*heads*/) {
    const Macs c = width;
    const Macs projections = 2 * n_q * c * c + 2 * n_kv * c * c;
    const Macs scores = 2 * static_cast<Macs>(n_q) * n_kv * c;
    return projections + scores;
}

Macs encoder_flops(std::size_t n_tokens, const detr::Config& cfg) {
    const Macs ffn = 2 * static_cast<Macs>(n_tokens) * cfg.d_model * cfg.d_ff;
    return cfg.enc_layers * (attention_flops(n_tokens, n_tokens, cfg.d_model, cfg.heads) + ffn);
}

Macs decoder_flops(std::size_t n_tokens, const detr::Config& cfg) {
    const std::size_t nq = cfg.num_queries;
    const Macs ffn = 2 * static_cast<Macs>(nq) * cfg.d_model * cfg.d_ff;
    return cfg.dec_layers * (attention_flops(nq, nq, cfg.d_model, cfg.heads) +
                             attention_flops(nq, n_tokens, cfg.d_model, cfg.heads) + ffn);
}

Macs cram_flops(std::size_t height, std::size_t width, const cram::Config& cfg, bool resize) {
    const Macs hw = static_cast<Macs>(height) * width;
    const Macs projection = 2 * cfg.channels * cfg.channels * hw;
    const Macs upsample = resize ? 4 * cfg.channels * hw : 0;
    return cfg.num_layers * (projection + upsample);
}

Macs osma_flops(std::size_t h0, std::size_t w0, std::size_t n_levels, std::size_t channels, const osma::Config& cfg) {
    cfg.validate();
    const std::size_t ah = round_up(h0, cfg.grid), aw = round_up(w0, cfg.grid);
    Macs align = 0;
    if (ah != h0 || aw != w0) {
        for (std::size_t i = 0; i < n_levels; ++i) align += 4 * static_cast<Macs>(channels) * (ah << i) * (aw << i);
    }
    const Macs grids = static_cast<Macs>(ah / cfg.grid) * (aw / cfg.grid);
    const Macs t = osma::token_count(n_levels, cfg.grid);
    const Macs d = cfg.latent_for(t);
    const Macs c = channels, p = cfg.out_tokens;
    const Macs per_grid = t * d * c + (cfg.depth - 1) * d * d * c + d * p * c + p * c * c;
    return align + grids * per_grid;
}

Macs toy_backbone_flops(std::size_t height, std::size_t width, std::size_t channels) {
    Macs total = 0;
    for (std::size_t s = 0; s < 5; ++s) {
        const Macs positions = static_cast<Macs>(height >> (s + 1)) * (width >> (s + 1));
        const Macs in = 4 * (s == 0 ? detr::kInputChannels : channels);
        total += positions * in * channels;
    }
    return total;
}

FlopBudget budget_report(const detr::ModelConfig& cfg, std::size_t height, std::size_t width,
                         const BudgetOptions& options) {
    using detr::Variant;
    cfg.validate();
    if (height == 0 || width == 0 || height % 32 || width % 32) {
        throw ValueError("budget: resolution " + std::to_string(height) + "x" + std::to_string(width) +
                         " must be a positive multiple of 32");
    }
    const auto& d = cfg.detr;
    const std::size_t f5h = height / 32, f5w = width / 32;

    FlopBudget b;
    b.height = height;
    b.width = width;
    b.variant = d.variant;
    b.convention = options.convention;
    b.backbone = options.backbone_macs ? *options.backbone_macs : toy_backbone_flops(height, width, d.d_model);

    std::size_t eh = f5h, ew = f5w;
    switch (d.variant) {
        case Variant::baseline:
            if (d.baseline_downsample == 2) {
                eh = (f5h + 1) / 2;
                ew = (f5w + 1) / 2;
                b.encoder += 4 * static_cast<Macs>(d.d_model) * eh * ew;
            }
            break;
        case Variant::dc:
            eh = 2 * f5h;
            ew = 2 * f5w;
            break;
        default: {
            const auto [oh, ow] = osma::output_extents(f5h, f5w, cfg.osma);
            eh = oh;
            ew = ow;
            b.osma = osma_flops(f5h, f5w, 3, d.d_model, cfg.osma);
            break;
        }
    }
    b.encoder_tokens = eh * ew;
    b.encoder += encoder_flops(b.encoder_tokens, d);

    std::size_t mh = eh, mw = ew;
    if (detr::uses_cram(d.variant)) {
        if (d.variant == Variant::oo_cred) {
            std::tie(mh, mw) = osma::output_extents(f5h, f5w, cfg.osma_c);
            b.osma += osma_flops(f5h, f5w, 3, d.d_model, cfg.osma_c);
        } else {
            mh = f5h << cfg.cram.pyramid_index();
            mw = f5w << cfg.cram.pyramid_index();
        }
        b.cram = cram_flops(mh, mw, cfg.cram, mh != eh || mw != ew);
        b.r = static_cast<double>(mh) / static_cast<double>(eh);
    }
    b.decoder_tokens = mh * mw;
    b.decoder = decoder_flops(b.decoder_tokens, d);
    return b;
}

std::vector<BudgetRow> rows(const FlopBudget& b) {
    const double total = static_cast<double>(b.total());
    auto row = [&](const char* name, Macs m) {
        return BudgetRow{name, m, b.convention.flops(m), total > 0 ? 100.0 * static_cast<double>(m) / total : 0.0};
    };
    return {row("backbone", b.backbone), row("encoder", b.encoder), row("decoder", b.decoder),
            row("cram", b.cram),         row("osma", b.osma),       row("total", b.total())};
}

std::string format_table(const FlopBudget& b) {
    std::ostringstream os;
    char line[160];
    std::snprintf(line, sizeof line, "variant %s at %zux%zu (encoder %zu tokens, decoder %zu tokens, r=%.2f)\n",
                  detr::to_string(b.variant).c_str(), b.height, b.width, b.encoder_tokens, b.decoder_tokens, b.r);
    os << line;
    std::snprintf(line, sizeof line, "%-10s %18s %12s %8s\n", "component", "MACs", "GFLOPs", "share%");
    os << line;
    for (const auto& r : rows(b)) {
        std::snprintf(line, sizeof line, "%-10s %18llu %12.3f %8.2f\n", r.component.c_str(),
                      static_cast<unsigned long long>(r.macs), r.flops / 1e9, r.share);
        os << line;
    }
    return os.str();
}

std::string format_csv(const std::vector<FlopBudget>& budgets) {
    std::ostringstream os;
    const bool multi = budgets.size() > 1;
    os << (multi ? "variant,resolution," : "") << "component,MACs,FLOPs,share%\n";
    char line[200];
    for (const auto& b : budgets) {
        for (const auto& r : rows(b)) {
            if (multi) os << detr::to_string(b.variant) << ',' << b.height << 'x' << b.width << ',';
            std::snprintf(line, sizeof line, "%s,%llu,%.0f,%.4f\n", r.component.c_str(),
                          static_cast<unsigned long long>(r.macs), r.flops, r.share);
            os << line;
        }
    }
    return os.str();
}

}  // namespace cred::flops
