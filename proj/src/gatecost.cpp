#include "dwn/gatecost.hpp"

#include <algorithm>
#include <queue>

namespace dwn {

namespace {

struct SearchResult {
    std::array<int, 16> depth;
    std::array<GateCircuit, 16> circuit;
};

/// States are 16-bit sets of realizable truth tables. Each BFS edge adds one
/// NAND of two already-available functions, so the first state containing a
/// function sits at its minimal gate count.
SearchResult run_search() {
    constexpr std::uint32_t kStart = (1u << kTruthA) | (1u << kTruthB);

    std::vector<int> dist(1u << 16, -1);
    struct Pred {
        std::uint32_t prev = 0;
        std::uint8_t g = 0, h = 0, f = 0;
    };
    std::vector<Pred> pred(1u << 16);

    std::queue<std::uint32_t> queue;
    dist[kStart] = 0;
    queue.push(kStart);

    SearchResult res;
    res.depth.fill(-1);
    std::array<std::uint32_t, 16> first_state{};
    res.depth[kTruthA] = 0;
    res.depth[kTruthB] = 0;
    first_state[kTruthA] = kStart;
    first_state[kTruthB] = kStart;

    int found = 2;
    while (!queue.empty() && found < 16) {
        const std::uint32_t state = queue.front();
        queue.pop();
        std::vector<std::uint8_t> avail;
        for (std::uint8_t f = 0; f < 16; ++f)
            if (state & (1u << f)) avail.push_back(f);
        for (std::size_t i = 0; i < avail.size(); ++i)
            for (std::size_t j = i; j < avail.size(); ++j) {
                const std::uint8_t f = nand_tt(avail[i], avail[j]);
                const std::uint32_t next = state | (1u << f);
                if (next == state || dist[next] >= 0) continue;
                dist[next] = dist[state] + 1;
                pred[next] = {state, avail[i], avail[j], f};
                if (res.depth[f] < 0) {
                    res.depth[f] = dist[next];
                    first_state[f] = next;
                    ++found;
                }
                queue.push(next);
            }
    }

    for (std::uint8_t f = 0; f < 16; ++f) {
        GateCircuit c;
        c.kind = GateRealization::Gates;
        std::uint32_t s = first_state[f];
        while (s != kStart) {
            const auto& p = pred[s];
            c.steps.push_back({p.g, p.h, p.f});
            s = p.prev;
        }
        std::reverse(c.steps.begin(), c.steps.end());
        res.circuit[f] = std::move(c);
    }
    return res;
}

} // namespace

std::array<int, 16> nand_search_min_gates() { return run_search().depth; }

const GateCostTable& gate_cost_table() {
    static const GateCostTable table = [] {
        SearchResult res = run_search();
        GateCostTable t;
        for (std::uint8_t f = 0; f < 16; ++f) {
            t.cost[f] = res.depth[f];
            t.circuit[f] = std::move(res.circuit[f]);
        }
        // Physical overrides: constants are tie-offs, passthroughs are wires.
        t.cost[0x0] = 0;
        t.circuit[0x0] = {GateRealization::Const0, {}};
        t.cost[0xF] = 0;
        t.circuit[0xF] = {GateRealization::Const1, {}};
        t.cost[kTruthA] = 0;
        t.circuit[kTruthA] = {GateRealization::WireA, {}};
        t.cost[kTruthB] = 0;
        t.circuit[kTruthB] = {GateRealization::WireB, {}};
        return t;
    }();
    return table;
}

} // namespace dwn
