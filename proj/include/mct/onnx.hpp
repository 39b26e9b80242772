#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "mct/common.hpp"

// Minimal reader/writer for the ONNX protobuf wire format, restricted to the
// feed-forward graphs this toolkit consumes (float tensors; Conv / Relu /
// MaxPool / AveragePool trunks, arbitrary ignored heads). Field numbers
// follow onnx.proto; unknown fields are skipped on read.

namespace mct::onnx {

struct Tensor {
    std::string name;
    std::vector<std::int64_t> dims;
    std::int32_t data_type = 1;  // 1 = float
    std::vector<float> values;
};

struct Attribute {
    std::string name;
    std::int32_t type = 0;  // 1=FLOAT 2=INT 3=STRING 4=TENSOR 6=FLOATS 7=INTS
    float f = 0.f;
    std::int64_t i = 0;
    std::string s;
    std::vector<float> floats;
    std::vector<std::int64_t> ints;
};

struct Node {
    std::string op_type;
    std::string name;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::vector<Attribute> attributes;

    const Attribute* attr(const std::string& attr_name) const {
        for (const auto& a : attributes)
            if (a.name == attr_name) return &a;
        return nullptr;
    }
    std::int64_t attr_int(const std::string& attr_name, std::int64_t fallback) const {
        const auto* a = attr(attr_name);
        return a ? a->i : fallback;
    }
    std::vector<std::int64_t> attr_ints(const std::string& attr_name,
                                        std::vector<std::int64_t> fallback) const {
        const auto* a = attr(attr_name);
        return a ? a->ints : fallback;
    }
};

struct ValueInfo {
    std::string name;
    std::vector<std::int64_t> dims;  // -1 for symbolic dimensions
};

struct Graph {
    std::string name;
    std::vector<Node> nodes;
    std::vector<Tensor> initializers;
    std::vector<ValueInfo> inputs;
    std::vector<ValueInfo> outputs;
};

struct Model {
    std::int64_t ir_version = 8;
    std::string producer_name;
    Graph graph;
    std::map<std::string, std::string> metadata;
};

// ---------------------------------------------------------------------------
// wire primitives

namespace wire {

class Reader {
public:
    Reader(const std::uint8_t* data, std::size_t size) : p_(data), end_(data + size) {}

    bool done() const { return p_ >= end_; }

    std::uint64_t varint() {
        std::uint64_t v = 0;
        int shift = 0;
        while (true) {
            require(p_ < end_, "onnx: truncated varint");
            const std::uint8_t b = *p_++;
            v |= static_cast<std::uint64_t>(b & 0x7f) << shift;
            if (!(b & 0x80)) break;
            shift += 7;
            require(shift < 64, "onnx: varint overflow");
        }
        return v;
    }

    std::uint32_t fixed32() {
        require(p_ + 4 <= end_, "onnx: truncated fixed32");
        std::uint32_t v = std::uint32_t(p_[0]) | (std::uint32_t(p_[1]) << 8) |
                          (std::uint32_t(p_[2]) << 16) | (std::uint32_t(p_[3]) << 24);
        p_ += 4;
        return v;
    }

    std::uint64_t fixed64() {
        const std::uint64_t lo = fixed32();
        const std::uint64_t hi = fixed32();
        return lo | (hi << 32);
    }

    Reader sub() {
        const std::uint64_t len = varint();
        require(p_ + len <= end_, "onnx: truncated length-delimited field");
        Reader r(p_, static_cast<std::size_t>(len));
        p_ += len;
        return r;
    }

    std::string str() {
        const std::uint64_t len = varint();
        require(p_ + len <= end_, "onnx: truncated string field");
        std::string s(reinterpret_cast<const char*>(p_), static_cast<std::size_t>(len));
        p_ += len;
        return s;
    }

    void skip(std::uint32_t wire_type) {
        switch (wire_type) {
            case 0: varint(); break;
            case 1: fixed64(); break;
            case 2: sub(); break;
            case 5: fixed32(); break;
            default: fail("onnx: unsupported wire type " + std::to_string(wire_type));
        }
    }

    // key = (field << 3) | wire_type; returns false at end of buffer
    bool next(std::uint32_t& field, std::uint32_t& wire_type) {
        if (done()) return false;
        const std::uint64_t key = varint();
        field = static_cast<std::uint32_t>(key >> 3);
        wire_type = static_cast<std::uint32_t>(key & 7);
        return true;
    }

private:
    const std::uint8_t* p_;
    const std::uint8_t* end_;
};

class Writer {
public:
    void varint(std::uint64_t v) {
        while (v >= 0x80) {
            out_.push_back(static_cast<std::uint8_t>(v) | 0x80);
            v >>= 7;
        }
        out_.push_back(static_cast<std::uint8_t>(v));
    }
    void key(std::uint32_t field, std::uint32_t wire_type) { varint((field << 3) | wire_type); }
    void v_int(std::uint32_t field, std::int64_t v) {
        key(field, 0);
        varint(static_cast<std::uint64_t>(v));
    }
    void v_float(std::uint32_t field, float v) {
        key(field, 5);
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xff));
    }
    void v_bytes(std::uint32_t field, const void* data, std::size_t n) {
        key(field, 2);
        varint(n);
        const auto* p = static_cast<const std::uint8_t*>(data);
        out_.insert(out_.end(), p, p + n);
    }
    void v_string(std::uint32_t field, const std::string& s) { v_bytes(field, s.data(), s.size()); }
    void v_message(std::uint32_t field, const Writer& sub) {
        v_bytes(field, sub.out_.data(), sub.out_.size());
    }
    void packed_int64(std::uint32_t field, const std::vector<std::int64_t>& vals) {
        Writer tmp;
        for (const auto v : vals) tmp.varint(static_cast<std::uint64_t>(v));
        v_bytes(field, tmp.out_.data(), tmp.out_.size());
    }

    const std::vector<std::uint8_t>& bytes() const { return out_; }

private:
    std::vector<std::uint8_t> out_;
};

}  // namespace wire

// ---------------------------------------------------------------------------
// parse

namespace detail {

inline Tensor parse_tensor(wire::Reader r) {
    Tensor t;
    std::string raw;
    std::uint32_t field = 0, wt = 0;
    while (r.next(field, wt)) {
        switch (field) {
            case 1:  // dims (packed or repeated varint)
                if (wt == 2) {
                    auto sub = r.sub();
                    while (!sub.done()) t.dims.push_back(static_cast<std::int64_t>(sub.varint()));
                } else {
                    t.dims.push_back(static_cast<std::int64_t>(r.varint()));
                }
                break;
            case 2: t.data_type = static_cast<std::int32_t>(r.varint()); break;
            case 4:  // float_data
                if (wt == 2) {
                    auto sub = r.sub();
                    while (!sub.done()) {
                        const std::uint32_t bits = sub.fixed32();
                        float v;
                        std::memcpy(&v, &bits, 4);
                        t.values.push_back(v);
                    }
                } else {
                    const std::uint32_t bits = r.fixed32();
                    float v;
                    std::memcpy(&v, &bits, 4);
                    t.values.push_back(v);
                }
                break;
            case 8: t.name = r.str(); break;
            case 9: raw = r.str(); break;
            default: r.skip(wt); break;
        }
    }
    if (!raw.empty()) {
        require(t.data_type == 1, "onnx: tensor \"" + t.name + "\" is not float32");
        require(raw.size() % 4 == 0, "onnx: raw tensor data not float32-aligned");
        t.values.resize(raw.size() / 4);
        for (std::size_t i = 0; i < t.values.size(); ++i) {
            const auto* b = reinterpret_cast<const std::uint8_t*>(raw.data()) + 4 * i;
            const std::uint32_t bits = std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
                                       (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
            std::memcpy(&t.values[i], &bits, 4);
        }
    }
    return t;
}

inline Attribute parse_attribute(wire::Reader r) {
    Attribute a;
    std::uint32_t field = 0, wt = 0;
    while (r.next(field, wt)) {
        switch (field) {
            case 1: a.name = r.str(); break;
            case 2: {
                const std::uint32_t bits = r.fixed32();
                std::memcpy(&a.f, &bits, 4);
                break;
            }
            case 3: a.i = static_cast<std::int64_t>(r.varint()); break;
            case 4: a.s = r.str(); break;
            case 7:
                if (wt == 2) {
                    auto sub = r.sub();
                    while (!sub.done()) {
                        const std::uint32_t bits = sub.fixed32();
                        float v;
                        std::memcpy(&v, &bits, 4);
                        a.floats.push_back(v);
                    }
                } else {
                    const std::uint32_t bits = r.fixed32();
                    float v;
                    std::memcpy(&v, &bits, 4);
                    a.floats.push_back(v);
                }
                break;
            case 8:
                if (wt == 2) {
                    auto sub = r.sub();
                    while (!sub.done()) a.ints.push_back(static_cast<std::int64_t>(sub.varint()));
                } else {
                    a.ints.push_back(static_cast<std::int64_t>(r.varint()));
                }
                break;
            case 20: a.type = static_cast<std::int32_t>(r.varint()); break;
            default: r.skip(wt); break;
        }
    }
    return a;
}

inline Node parse_node(wire::Reader r) {
    Node n;
    std::uint32_t field = 0, wt = 0;
    while (r.next(field, wt)) {
        switch (field) {
            case 1: n.inputs.push_back(r.str()); break;
            case 2: n.outputs.push_back(r.str()); break;
            case 3: n.name = r.str(); break;
            case 4: n.op_type = r.str(); break;
            case 5: n.attributes.push_back(parse_attribute(r.sub())); break;
            default: r.skip(wt); break;
        }
    }
    return n;
}

inline ValueInfo parse_value_info(wire::Reader r) {
    ValueInfo v;
    std::uint32_t field = 0, wt = 0;
    while (r.next(field, wt)) {
        if (field == 1) {
            v.name = r.str();
        } else if (field == 2) {  // TypeProto
            auto type = r.sub();
            std::uint32_t f2 = 0, w2 = 0;
            while (type.next(f2, w2)) {
                if (f2 == 1) {  // tensor_type
                    auto tt = type.sub();
                    std::uint32_t f3 = 0, w3 = 0;
                    while (tt.next(f3, w3)) {
                        if (f3 == 2) {  // shape
                            auto shape = tt.sub();
                            std::uint32_t f4 = 0, w4 = 0;
                            while (shape.next(f4, w4)) {
                                if (f4 == 1) {  // dim
                                    auto dim = shape.sub();
                                    std::uint32_t f5 = 0, w5 = 0;
                                    std::int64_t value = -1;
                                    while (dim.next(f5, w5)) {
                                        if (f5 == 1)
                                            value = static_cast<std::int64_t>(dim.varint());
                                        else
                                            dim.skip(w5);
                                    }
                                    v.dims.push_back(value);
                                } else {
                                    shape.skip(w4);
                                }
                            }
                        } else {
                            tt.skip(w3);
                        }
                    }
                } else {
                    type.skip(w2);
                }
            }
        } else {
            r.skip(wt);
        }
    }
    return v;
}

inline Graph parse_graph(wire::Reader r) {
    Graph g;
    std::uint32_t field = 0, wt = 0;
    while (r.next(field, wt)) {
        switch (field) {
            case 1: g.nodes.push_back(parse_node(r.sub())); break;
            case 2: g.name = r.str(); break;
            case 5: g.initializers.push_back(parse_tensor(r.sub())); break;
            case 11: g.inputs.push_back(parse_value_info(r.sub())); break;
            case 12: g.outputs.push_back(parse_value_info(r.sub())); break;
            default: r.skip(wt); break;
        }
    }
    return g;
}

}  // namespace detail

inline Model parse_model(const std::vector<std::uint8_t>& bytes) {
    Model m;
    wire::Reader r(bytes.data(), bytes.size());
    std::uint32_t field = 0, wt = 0;
    bool has_graph = false;
    while (r.next(field, wt)) {
        switch (field) {
            case 1: m.ir_version = static_cast<std::int64_t>(r.varint()); break;
            case 2: m.producer_name = r.str(); break;
            case 7:
                m.graph = detail::parse_graph(r.sub());
                has_graph = true;
                break;
            case 14: {  // metadata_props: StringStringEntryProto
                auto entry = r.sub();
                std::string key, value;
                std::uint32_t f2 = 0, w2 = 0;
                while (entry.next(f2, w2)) {
                    if (f2 == 1)
                        key = entry.str();
                    else if (f2 == 2)
                        value = entry.str();
                    else
                        entry.skip(w2);
                }
                m.metadata[key] = value;
                break;
            }
            default: r.skip(wt); break;
        }
    }
    require(has_graph, "onnx: model has no graph");
    return m;
}

inline Model load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "onnx: cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    require(!bytes.empty(), "onnx: empty model file " + path);
    try {
        return parse_model(bytes);
    } catch (const Error& e) {
        fail(std::string(e.what()) + " (" + path + ")");
    }
}

// ---------------------------------------------------------------------------
// serialize

namespace detail {

inline wire::Writer write_tensor(const Tensor& t) {
    wire::Writer w;
    w.packed_int64(1, t.dims);
    w.v_int(2, t.data_type);
    w.v_string(8, t.name);
    std::vector<std::uint8_t> raw(t.values.size() * 4);
    for (std::size_t i = 0; i < t.values.size(); ++i) {
        std::uint32_t bits;
        std::memcpy(&bits, &t.values[i], 4);
        for (int b = 0; b < 4; ++b) raw[4 * i + static_cast<std::size_t>(b)] =
            static_cast<std::uint8_t>((bits >> (8 * b)) & 0xff);
    }
    w.v_bytes(9, raw.data(), raw.size());
    return w;
}

inline wire::Writer write_attribute(const Attribute& a) {
    wire::Writer w;
    w.v_string(1, a.name);
    switch (a.type) {
        case 1: w.v_float(2, a.f); break;
        case 2: w.v_int(3, a.i); break;
        case 3: w.v_string(4, a.s); break;
        case 6:
            for (const auto f : a.floats) w.v_float(7, f);
            break;
        case 7: w.packed_int64(8, a.ints); break;
        default: fail("onnx: unsupported attribute type on write"); break;
    }
    w.v_int(20, a.type);
    return w;
}

inline wire::Writer write_node(const Node& n) {
    wire::Writer w;
    for (const auto& s : n.inputs) w.v_string(1, s);
    for (const auto& s : n.outputs) w.v_string(2, s);
    w.v_string(3, n.name);
    w.v_string(4, n.op_type);
    for (const auto& a : n.attributes) w.v_message(5, write_attribute(a));
    return w;
}

inline wire::Writer write_value_info(const ValueInfo& v) {
    wire::Writer shape;
    for (const auto d : v.dims) {
        wire::Writer dim;
        if (d >= 0) dim.v_int(1, d);
        // symbolic dims are left empty
        shape.v_message(1, dim);
    }
    wire::Writer tensor_type;
    tensor_type.v_int(1, 1);  // elem_type float
    tensor_type.v_message(2, shape);
    wire::Writer type;
    type.v_message(1, tensor_type);
    wire::Writer w;
    w.v_string(1, v.name);
    w.v_message(2, type);
    return w;
}

}  // namespace detail

inline std::vector<std::uint8_t> serialize_model(const Model& m) {
    wire::Writer graph;
    for (const auto& n : m.graph.nodes) graph.v_message(1, detail::write_node(n));
    graph.v_string(2, m.graph.name);
    for (const auto& t : m.graph.initializers) graph.v_message(5, detail::write_tensor(t));
    for (const auto& v : m.graph.inputs) graph.v_message(11, detail::write_value_info(v));
    for (const auto& v : m.graph.outputs) graph.v_message(12, detail::write_value_info(v));

    wire::Writer w;
    w.v_int(1, m.ir_version);
    w.v_string(2, m.producer_name);
    w.v_message(7, graph);
    {
        wire::Writer opset;  // opset_import: domain "" version 13
        opset.v_string(1, "");
        opset.v_int(2, 13);
        w.v_message(8, opset);
    }
    for (const auto& [key, value] : m.metadata) {
        wire::Writer entry;
        entry.v_string(1, key);
        entry.v_string(2, value);
        w.v_message(14, entry);
    }
    return w.bytes();
}

inline void save_model(const Model& m, const std::string& path) {
    const auto bytes = serialize_model(m);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), "onnx: cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    require(out.good(), "onnx: write failed: " + path);
}

}  // namespace mct::onnx
