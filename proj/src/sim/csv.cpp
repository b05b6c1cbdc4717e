#include "physsym/sim.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <sstream>

namespace physsym {

namespace {

void append_number(std::string& out, double v)
{
    std::array<char, 40> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::general, 17);
    out.append(buf.data(), ptr);
}

std::vector<std::string_view> split_row(std::string_view line)
{
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        std::size_t const comma = line.find(',', start);
        auto cell = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
        while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) {
            cell.remove_prefix(1);
        }
        while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t' || cell.back() == '\r')) {
            cell.remove_suffix(1);
        }
        cells.push_back(cell);
        if (comma == std::string_view::npos) {
            break;
        }
        start = comma + 1;
    }
    return cells;
}

}  // namespace

std::string to_csv(const Trajectory& traj)
{
    std::string out = "t,x,v,a\n";
    out.reserve(traj.size() * 96 + 8);
    for (std::size_t i = 0; i < traj.size(); ++i) {
        append_number(out, traj.t[i]);
        out += ',';
        append_number(out, traj.x[i]);
        out += ',';
        append_number(out, traj.v[i]);
        out += ',';
        append_number(out, traj.a[i]);
        out += '\n';
    }
    return out;
}

void write_csv(const Trajectory& traj, std::ostream& out) { out << to_csv(traj); }

Trajectory parse_csv(const std::string& text)
{
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || split_row(line).empty() || line.find_first_not_of(" \t\r") == std::string::npos) {
        throw FormatError("empty trajectory file");
    }
    auto const header = split_row(line);
    std::array<int, 4> col{-1, -1, -1, -1};
    constexpr std::array<std::string_view, 4> names{"t", "x", "v", "a"};
    for (std::size_t i = 0; i < header.size(); ++i) {
        for (std::size_t j = 0; j < names.size(); ++j) {
            if (header[i] == names[j]) {
                col[j] = static_cast<int>(i);
            }
        }
    }
    for (std::size_t j = 0; j < names.size(); ++j) {
        if (col[j] < 0) {
            throw FormatError("missing column '" + std::string(names[j]) + "'");
        }
    }

    Trajectory traj;
    std::array<std::vector<double>*, 4> dest{&traj.t, &traj.x, &traj.v, &traj.a};
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        auto const cells = split_row(line);
        if (cells.size() != header.size()) {
            throw FormatError("row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                              " fields, header has " + std::to_string(header.size()));
        }
        for (std::size_t j = 0; j < 4; ++j) {
            auto cell = cells[static_cast<std::size_t>(col[j])];
            if (!cell.empty() && cell.front() == '+') {
                cell.remove_prefix(1);
            }
            double value = 0.0;
            auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
            if (ec != std::errc{} || ptr != cell.data() + cell.size()) {
                throw FormatError("row " + std::to_string(row) + ": '" + std::string(cell) + "' is not a number");
            }
            dest[j]->push_back(value);
        }
        if (traj.t.size() >= 2 && !(traj.t.back() > traj.t[traj.t.size() - 2])) {
            throw FormatError("time column is not strictly increasing at row " + std::to_string(row));
        }
    }
    if (traj.empty()) {
        throw FormatError("trajectory file has no data rows");
    }
    return traj;
}

Trajectory read_csv(std::istream& in)
{
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_csv(buf.str());
}

void export_csv(const Trajectory& traj, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << to_csv(traj);
}

Trajectory import_csv(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open " + path.string());
    }
    return read_csv(in);
}

}  // namespace physsym
