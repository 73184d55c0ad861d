#include "parereg/app/weights.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <set>

#include "parereg/error.hpp"

namespace parereg::app {

namespace {

std::size_t element_count(const std::vector<std::uint32_t>& dims) {
  std::size_t n = 1;
  for (const auto d : dims) n *= d;
  return n;
}

std::string dims_string(const std::vector<std::uint32_t>& dims) {
  std::string s = "[";
  for (std::size_t i = 0; i < dims.size(); ++i) s += (i ? "," : "") + std::to_string(dims[i]);
  return s + "]";
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  [[nodiscard]] bool done() const { return pos_ == bytes_.size(); }

  std::uint32_t u32(const std::string& what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(bytes_[pos_ + b]) << (8 * b);
    pos_ += 4;
    return v;
  }

  std::string text(std::size_t n, const std::string& what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n, const std::string& what) {
    if (bytes_.size() - pos_ < n) {
      throw InputError("truncated weight file: " + what + " at byte " + std::to_string(pos_));
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void WeightContainer::add(WeightRecord record) {
  if (find(record.name)) throw InputError("duplicate weight record '" + record.name + "'");
  if (element_count(record.dims) != record.data.size()) {
    throw InputError("weight record '" + record.name + "' payload does not match dims " +
                     dims_string(record.dims));
  }
  records_.push_back(std::move(record));
}

const WeightRecord* WeightContainer::find(const std::string& name) const {
  for (const auto& r : records_) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

std::vector<std::uint8_t> WeightContainer::to_bytes() const {
  std::vector<std::uint8_t> out(kMagic, kMagic + kMagicSize);
  for (const auto& r : records_) {
    put_u32(out, static_cast<std::uint32_t>(r.name.size()));
    out.insert(out.end(), r.name.begin(), r.name.end());
    put_u32(out, static_cast<std::uint32_t>(r.dims.size()));
    for (const auto d : r.dims) put_u32(out, d);
    for (const float v : r.data) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

WeightContainer WeightContainer::from_bytes(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  if (in.text(kMagicSize, "magic") != std::string(kMagic, kMagicSize)) {
    throw InputError("not a weight file (bad magic)");
  }
  WeightContainer out;
  std::size_t index = 0;
  while (!in.done()) {
    const std::string where = "record " + std::to_string(index);
    WeightRecord r;
    r.name = in.text(in.u32(where + " name length"), where + " name");
    const std::string rec = "record '" + r.name + "'";
    const std::uint32_t rank = in.u32(rec + " rank");
    for (std::uint32_t i = 0; i < rank; ++i) r.dims.push_back(in.u32(rec + " dims"));
    const std::size_t n = element_count(r.dims);
    r.data.reserve(n);
    for (std::size_t i = 0; i < n; ++i) r.data.push_back(std::bit_cast<float>(in.u32(rec + " payload")));
    out.add(std::move(r));
    ++index;
  }
  return out;
}

void WeightContainer::save(const std::filesystem::path& path) const {
  const auto bytes = to_bytes();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

WeightContainer WeightContainer::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot read " + path.string());
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(f), {}};
  return from_bytes(bytes);
}

std::uint64_t WeightContainer::layout_hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](std::uint8_t b) {
    h ^= b;
    h *= 1099511628211ULL;
  };
  for (const auto& r : records_) {
    for (const char c : r.name) mix(static_cast<std::uint8_t>(c));
    mix(0);
    for (const auto d : r.dims) {
      for (int b = 0; b < 4; ++b) mix(static_cast<std::uint8_t>(d >> (8 * b)));
    }
  }
  return h;
}

Model init_model(const conv::BackboneConfig& backbone, const matching::ContextConfig& context,
                 std::uint64_t seed) {
  Model m;
  m.backbone = conv::init_backbone(backbone, seed);
  m.matching = matching::init_matching(context, backbone.superpoint_descriptor_width(),
                                       backbone.point_descriptor_width(), seed ^ 0x9e3779b97f4a7c15ULL);
  return m;
}

namespace {

template <typename M>
std::vector<std::uint32_t> dims_of(const M& m) {
  if constexpr (M::IsVectorAtCompileTime) {
    return {static_cast<std::uint32_t>(m.size())};
  } else {
    return {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())};
  }
}

template <typename M, typename F>
void visit_model(M& model, F&& f) {
  conv::visit_parameters(model.backbone, f);
  matching::visit_parameters(model.matching, f);
}

}  // namespace

WeightContainer export_weights(const Model& model) {
  WeightContainer out;
  visit_model(model, [&](const std::string& name, auto& m) {
    WeightRecord r{name, dims_of(m), {}};
    r.data.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) r.data.push_back(static_cast<float>(m(i, j)));
    }
    out.add(std::move(r));
  });
  return out;
}

void import_weights(const WeightContainer& weights, Model& model) {
  std::set<std::string> seen;
  visit_model(model, [&](const std::string& name, auto& m) {
    const WeightRecord* r = weights.find(name);
    if (!r) throw InputError("weights: missing tensor '" + name + "'");
    const auto expected = dims_of(m);
    if (r->dims != expected) {
      throw InputError("weights: tensor '" + name + "' has dims " + dims_string(r->dims) +
                       ", configuration expects " + dims_string(expected));
    }
    std::size_t k = 0;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = static_cast<double>(r->data[k++]);
    }
    seen.insert(name);
  });
  for (const auto& r : weights.records()) {
    if (!seen.count(r.name)) throw InputError("weights: unexpected tensor '" + r.name + "'");
  }
}

}  // namespace parereg::app
