#include "dwn/netlist.hpp"

#include <map>
#include <sstream>

#include "dwn/errors.hpp"
#include "dwn/gatecost.hpp"

namespace dwn {

namespace {

class Builder {
  public:
    explicit Builder(std::uint32_t input_bits) { net_.input_bits = input_bits; }

    std::uint32_t emit_nand(std::uint32_t a, std::uint32_t b) {
        net_.gates.push_back({a, b});
        return net_.ref_count() - 1;
    }

    /// One LUT-2 output given the refs feeding address bits a (pin 0) and b.
    std::uint32_t emit_lut(std::uint8_t tt, std::uint32_t ra, std::uint32_t rb) {
        const auto& entry = gate_cost_table().circuit[tt];
        switch (entry.kind) {
        case GateRealization::Const0: return kNetConst0;
        case GateRealization::Const1: return kNetConst1;
        case GateRealization::WireA: return ra;
        case GateRealization::WireB: return rb;
        case GateRealization::Gates: break;
        }
        std::map<std::uint8_t, std::uint32_t> ref_of{{kTruthA, ra}, {kTruthB, rb}};
        std::uint32_t last = kNetConst0;
        for (const auto& step : entry.steps) {
            last = emit_nand(ref_of.at(step.lhs), ref_of.at(step.rhs));
            ref_of.emplace(step.out, last);
        }
        return last;
    }

    std::vector<std::uint32_t> emit_stage(const FrozenStage& st,
                                          const std::vector<std::uint32_t>& wires) {
        if (st.n != 2)
            throw UnsupportedForNetlist("netlist: stage has fan-in " + std::to_string(st.n) +
                                        ", only fan-in 2 maps to gates");
        std::vector<std::uint32_t> out(st.u);
        for (std::uint32_t i = 0; i < st.u; ++i) {
            std::uint8_t tt = 0;
            for (std::uint32_t k = 0; k < 4; ++k)
                tt |= std::uint8_t(st.table_bit(i, k)) << k;
            out[i] = emit_lut(tt, wires[st.sel[2 * i]], wires[st.sel[2 * i + 1]]);
        }
        return out;
    }

    Netlist take() { return std::move(net_); }

  private:
    Netlist net_;
};

} // namespace

Netlist export_netlist(const FrozenModel& model) {
    if (model.chains.empty()) throw NotFrozenError("netlist: model has no frozen stages");
    model.validate();
    if (model.head != HeadKind::Pyramid)
        throw UnsupportedForNetlist("netlist: popcount heads need adder macros, "
                                    "only pyramid heads export to gates");

    Builder b(model.input_bits);
    std::vector<std::uint32_t> primary(model.input_bits);
    for (std::uint32_t k = 0; k < model.input_bits; ++k) primary[k] = net_input_ref(k);

    std::vector<std::uint32_t> shared = primary;
    for (std::uint32_t s = 0; s < model.shared_prefix; ++s)
        shared = b.emit_stage(model.chains[0][s], shared);

    Netlist net;
    std::vector<std::uint32_t> outputs;
    std::vector<std::string> names;
    for (std::size_t c = 0; c < model.chains.size(); ++c) {
        std::vector<std::uint32_t> wires = shared;
        const auto& chain = model.chains[c];
        for (std::size_t s = model.shared_prefix; s < chain.size(); ++s)
            wires = b.emit_stage(chain[s], wires);
        outputs.push_back(wires.at(0));
        names.push_back("class" + std::to_string(model.chains.size() == 1 ? 1 : std::uint32_t(c)));
    }
    net = b.take();
    net.outputs = std::move(outputs);
    net.output_names = std::move(names);
    return net;
}

BitVector simulate(const Netlist& net, const BitVector& input) {
    if (input.size() != net.input_bits)
        throw InputShapeError("netlist: expected " + std::to_string(net.input_bits) +
                              " input bits, got " + std::to_string(input.size()));
    std::vector<char> value(net.ref_count());
    value[kNetConst1] = 1;
    for (std::uint32_t k = 0; k < net.input_bits; ++k) value[net_input_ref(k)] = input.get(k);
    std::uint32_t next = 2 + net.input_bits;
    for (const auto& g : net.gates) {
        if (g.a >= next || g.b >= next)
            throw ConfigError("netlist: gate operand references a later signal");
        value[next++] = !(value[g.a] && value[g.b]);
    }
    BitVector out(net.outputs.size());
    for (std::size_t j = 0; j < net.outputs.size(); ++j) {
        if (net.outputs[j] >= net.ref_count())
            throw ConfigError("netlist: output references an undefined signal");
        out.set(j, value[net.outputs[j]]);
    }
    return out;
}

std::uint32_t netlist_class(const Netlist& net, const BitVector& input) {
    BitVector bits = simulate(net, input);
    if (bits.size() == 1) return bits.get(0) ? 1 : 0;
    for (std::size_t c = 0; c < bits.size(); ++c)
        if (bits.get(c)) return std::uint32_t(c);
    return 0;
}

namespace {

std::string ref_token(const Netlist& net, std::uint32_t ref) {
    if (ref == kNetConst0) return "const0";
    if (ref == kNetConst1) return "const1";
    if (ref < 2 + net.input_bits) return "in" + std::to_string(ref - 2);
    return "g" + std::to_string(ref - 2 - net.input_bits);
}

} // namespace

std::string netlist_text(const Netlist& net) {
    std::ostringstream os;
    os << "nand-netlist v1\n";
    os << "inputs " << net.input_bits << "\n";
    os << "gates " << net.gates.size() << "\n";
    for (std::size_t k = 0; k < net.gates.size(); ++k)
        os << "g" << k << " = nand(" << ref_token(net, net.gates[k].a) << ", "
           << ref_token(net, net.gates[k].b) << ")\n";
    for (std::size_t j = 0; j < net.outputs.size(); ++j)
        os << "output " << net.output_names[j] << " = " << ref_token(net, net.outputs[j]) << "\n";
    return os.str();
}

} // namespace dwn
