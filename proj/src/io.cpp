#include "qldp/io.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace qldp {

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format_double(row[i]);
    out << '\n';
  }
}

namespace {

void put_le(std::ostream& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xffu);
  out.write(bytes, 8);
}

double get_le(const unsigned char* bytes) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

void write_binary_dump(const std::filesystem::path& base, const Mat& data, const nlohmann::json& meta) {
  auto bin = base;
  bin += ".bin";
  auto side = base;
  side += ".json";
  std::ofstream out(bin, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + bin.string() + " for writing");
  for (Eigen::Index r = 0; r < data.rows(); ++r)
    for (Eigen::Index c = 0; c < data.cols(); ++c) put_le(out, data(r, c));
  nlohmann::json sidecar = meta.is_object() ? meta : nlohmann::json::object();
  sidecar["file"] = bin.filename().string();
  sidecar["dtype"] = "float64";
  sidecar["byte_order"] = "little";
  sidecar["layout"] = "row-major";
  sidecar["shape"] = {data.rows(), data.cols()};
  write_json(side, sidecar);
}

BinaryDump read_binary_dump(const std::filesystem::path& base) {
  auto bin = base;
  bin += ".bin";
  auto side = base;
  side += ".json";
  std::ifstream js(side);
  if (!js) throw std::runtime_error("missing sidecar " + side.string());
  BinaryDump dump;
  dump.sidecar = nlohmann::json::parse(js);
  const auto rows = dump.sidecar.at("shape").at(0).get<Eigen::Index>();
  const auto cols = dump.sidecar.at("shape").at(1).get<Eigen::Index>();
  std::ifstream in(bin, std::ios::binary);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() != static_cast<std::size_t>(rows * cols * 8))
    throw std::runtime_error("binary dump size does not match its sidecar");
  dump.data.resize(rows, cols);
  std::size_t off = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c, off += 8) dump.data(r, c) = get_le(bytes.data() + off);
  return dump;
}

void write_path_csv(const std::filesystem::path& path, const PathSample& sample) {
  std::vector<std::string> header{"t"};
  for (Eigen::Index i = 0; i < sample.X.cols(); ++i) header.push_back("x" + std::to_string(i));
  for (Eigen::Index i = 0; i < sample.Y.cols(); ++i) header.push_back("y" + std::to_string(i));
  std::vector<std::vector<double>> rows;
  rows.reserve(sample.times.size());
  for (std::size_t k = 0; k < sample.times.size(); ++k) {
    std::vector<double> row{sample.times[k]};
    const auto r = static_cast<Eigen::Index>(k);
    for (Eigen::Index i = 0; i < sample.X.cols(); ++i) row.push_back(sample.X(r, i));
    for (Eigen::Index i = 0; i < sample.Y.cols(); ++i) row.push_back(sample.Y(r, i));
    rows.push_back(std::move(row));
  }
  write_csv(path, header, rows);
}

void write_json(const std::filesystem::path& path, const nlohmann::json& value) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << value.dump(2) << '\n';
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace qldp
