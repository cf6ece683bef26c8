#include "dsb/io/pair_io.hpp"

#include "dsb/core/error.hpp"

namespace dsb::io {

Json to_json(const PairConfig& c) {
  Json j;
  j["D"] = c.D;
  j["S"] = c.S;
  j["kind"] = to_string(c.kind);
  j["gamma"] = c.gamma;
  j["steps"] = c.steps;
  j["K"] = c.K;
  j["seed"] = c.seed;
  j["mean_lo"] = c.mean_lo;
  j["mean_hi"] = c.mean_hi;
  j["core_sigma"] = c.core_sigma;
  Json src;
  src["kind"] = to_string(c.source.kind);
  src["mean"] = c.source.mean;
  src["stddev"] = c.source.stddev;
  j["source"] = src;
  return j;
}

PairConfig pair_config_from_json(const Json& j) {
  try {
    PairConfig c;
    c.D = j.at("D").get<std::size_t>();
    c.S = j.at("S").get<std::size_t>();
    c.kind = parse_reference_kind(j.at("kind").get<std::string>());
    c.gamma = j.at("gamma").get<double>();
    c.steps = j.at("steps").get<std::size_t>();
    c.K = j.at("K").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.mean_lo = j.at("mean_lo").get<double>();
    c.mean_hi = j.at("mean_hi").get<double>();
    c.core_sigma = j.at("core_sigma").get<double>();
    const Json& src = j.at("source");
    c.source.kind = parse_source_kind(src.at("kind").get<std::string>());
    c.source.mean = src.at("mean").get<std::vector<double>>();
    c.source.stddev = src.at("stddev").get<std::vector<double>>();
    c.validate();
    return c;
  } catch (const Json::exception& e) {
    throw CorruptFileError(std::string("pair config in header is malformed: ") + e.what());
  }
}

void save_pair(const BenchmarkPair& pair, const std::string& path, const Json& extra) {
  Json header = extra;
  header["role"] = "pair";
  header["pair"] = to_json(pair.config());
  const CPScalarField& f = pair.field();
  header["arrays"] = {{"log_beta", {f.K}}, {"log_cores", {f.K, f.D, f.S}}};
  Bytes payload;
  put_f64(payload, f.log_beta);
  put_f64(payload, f.log_cores);
  write_container(path, kPairMagic, header, payload);
}

BenchmarkPair load_pair(const std::string& path) {
  Container c = read_container(path, kPairMagic, "pair");
  PairConfig config = pair_config_from_json(c.header.at("pair"));
  CPScalarField field(config.K, config.D, config.S);
  Reader r(c.payload);
  field.log_beta = r.f64(field.K);
  field.log_cores = r.f64(field.K * field.D * field.S);
  if (!r.done()) throw CorruptFileError("'" + path + "': trailing bytes after the field arrays");
  try {
    field.validate();
  } catch (const ValidationError& e) {
    throw CorruptFileError("'" + path + "': " + e.what());
  }
  return BenchmarkPair(config, std::move(field));
}

void save_test_set(const TestSet& set, const std::string& path, const std::string& pair_hash,
                   const Json& extra) {
  Json header = extra;
  header["role"] = "test_set";
  header["pair_hash"] = pair_hash;
  header["seed"] = set.seed;
  header["rows"] = set.rows();
  header["D"] = set.x0.D;
  header["S"] = set.x0.S;
  Bytes payload;
  put_u16(payload, set.x0.data);
  put_u16(payload, set.x1.data);
  write_container(path, kSetMagic, header, payload);
}

LoadedTestSet load_test_set(const std::string& path) {
  Container c = read_container(path, kSetMagic, "test_set");
  LoadedTestSet out;
  const std::size_t rows = c.header.at("rows").get<std::size_t>();
  const std::size_t D = c.header.at("D").get<std::size_t>();
  const std::size_t S = c.header.at("S").get<std::size_t>();
  out.set.seed = c.header.at("seed").get<std::uint64_t>();
  out.pair_hash = c.header.at("pair_hash").get<std::string>();
  Reader r(c.payload);
  out.set.x0 = SampleBatch(D, S);
  out.set.x1 = SampleBatch(D, S);
  out.set.x0.data = r.u16(rows * D);
  out.set.x1.data = r.u16(rows * D);
  if (!r.done()) throw CorruptFileError("'" + path + "': trailing bytes after the sample rows");
  for (auto v : out.set.x0.data)
    if (v >= S) throw CorruptFileError("'" + path + "': category out of range");
  for (auto v : out.set.x1.data)
    if (v >= S) throw CorruptFileError("'" + path + "': category out of range");
  out.header = std::move(c.header);
  return out;
}

}  // namespace dsb::io
