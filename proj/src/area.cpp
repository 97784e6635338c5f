#include "dwn/area.hpp"

#include <cmath>

#include "dwn/gatecost.hpp"

namespace dwn {

PopcountArea popcount_area(std::uint32_t n_inputs) {
    PopcountArea a;
    if (n_inputs < 3) {
        // 0 or 1 bit needs no adder; 2 bits need a single half adder.
        if (n_inputs == 2) {
            a.half_adders = 1.0;
            a.nand2 = 3.5;
        }
        a.closed_form = a.nand2;
        return a;
    }
    const double n = double(n_inputs);
    a.full_adders = n - std::log2(n / 3.0) - 2.0;
    a.half_adders = n / 3.0 - 1.0;
    a.nand2 = 7.0 * a.full_adders + 3.5 * a.half_adders;
    // Same estimate expanded algebraically (the published rounded constants
    // 8.167 and 6.405 drift by more than a NAND at large N).
    a.closed_form = 49.0 / 6.0 * n - 7.0 * std::log2(n) + 7.0 * std::log2(3.0) - 17.5;
    return a;
}

AreaReport model_area(const FrozenModel& model) {
    if (model.chains.empty()) throw NotFrozenError("area: model has no frozen stages");
    model.validate();
    const auto& costs = gate_cost_table();
    AreaReport report;

    auto add_stage = [&](const FrozenStage& st) {
        LayerArea la;
        la.fan_in = st.n;
        la.lut_count = st.u;
        if (st.n == 2) {
            double nand = 0.0;
            for (std::uint32_t i = 0; i < st.u; ++i) {
                std::uint8_t tt = 0;
                for (std::uint32_t k = 0; k < 4; ++k)
                    tt |= std::uint8_t(st.table_bit(i, k)) << k;
                nand += double(costs.cost[tt]);
            }
            la.nand2 = nand;
            la.exact = true;
            report.logic_nand += nand;
        } else {
            report.logic_exact = false;
        }
        report.layers.push_back(la);
    };

    for (std::size_t c = 0; c < model.chains.size(); ++c) {
        const auto& chain = model.chains[c];
        const std::size_t skip = c == 0 ? 0 : model.shared_prefix;
        for (std::size_t s = skip; s < chain.size(); ++s) add_stage(chain[s]);
    }
    if (!report.logic_exact)
        report.warnings.push_back(
            "layers with fan-in != 2 have no exact gate mapping; their LUTs are reported by "
            "count only and excluded from the logic total");

    if (model.head == HeadKind::Popcount) {
        const auto& final_stage = model.chains[0].back();
        PopcountHead head(final_stage.u, model.class_count, model.tau);
        for (std::uint32_t c = 0; c < model.class_count; ++c)
            report.popcount_nand += popcount_area(head.block_len(c)).nand2;
    }
    report.total_nand = report.logic_nand + report.popcount_nand;
    return report;
}

} // namespace dwn
