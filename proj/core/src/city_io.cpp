#include <stda/city_io.hpp>
#include <stda/errors.hpp>

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace stda {

namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw LoadError(path.string() + ": cannot open file");
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

[[noreturn]] void fail(const fs::path& path, std::size_t line, const std::string& what)
{
    throw LoadError(path.string() + ":" + std::to_string(line) + ": " + what);
}

std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

// Splits one line on commas into `out` (views into `line`).
void split_fields(std::string_view line, std::vector<std::string_view>& out)
{
    out.clear();
    std::size_t pos = 0;
    while (true) {
        auto comma = line.find(',', pos);
        if (comma == std::string_view::npos) {
            out.push_back(trim(line.substr(pos)));
            return;
        }
        out.push_back(trim(line.substr(pos, comma - pos)));
        pos = comma + 1;
    }
}

template <class F>
void for_each_line(const std::string& text, F&& f)
{
    std::size_t pos = 0, lineno = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string::npos)
            nl = text.size();
        ++lineno;
        std::string_view line(text.data() + pos, nl - pos);
        if (!trim(line).empty())
            f(line, lineno);
        pos = nl + 1;
    }
}

bool parse_double(std::string_view s, double& out)
{
    if (s.empty())
        return false;
    if (s.front() == '+')
        s.remove_prefix(1);
    auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc{} && res.ptr == s.data() + s.size();
}

bool parse_size(std::string_view s, std::size_t& out)
{
    auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return !s.empty() && res.ec == std::errc{} && res.ptr == s.data() + s.size();
}

int parse_int_field(std::string_view s, std::size_t& pos, std::size_t width)
{
    if (pos + width > s.size())
        throw ContractError("truncated timestamp");
    int v = 0;
    auto res = std::from_chars(s.data() + pos, s.data() + pos + width, v);
    if (res.ec != std::errc{} || res.ptr != s.data() + pos + width)
        throw ContractError("bad digits in timestamp");
    pos += width;
    return v;
}

void expect_char(std::string_view s, std::size_t& pos, std::string_view allowed)
{
    if (pos >= s.size() || allowed.find(s[pos]) == std::string_view::npos)
        throw ContractError("unexpected separator in timestamp");
    ++pos;
}

} // namespace

CityFiles CityFiles::in_directory(const fs::path& dir)
{
    return CityFiles{dir / "speed.csv", dir / "adjacency.csv", dir / "meta.json"};
}

std::int64_t parse_iso8601_minutes(std::string_view text)
{
    using namespace std::chrono;
    std::size_t pos = 0;
    const int y = parse_int_field(text, pos, 4);
    expect_char(text, pos, "-");
    const int mo = parse_int_field(text, pos, 2);
    expect_char(text, pos, "-");
    const int d = parse_int_field(text, pos, 2);
    expect_char(text, pos, "T ");
    const int hh = parse_int_field(text, pos, 2);
    expect_char(text, pos, ":");
    const int mm = parse_int_field(text, pos, 2);
    if (pos < text.size() && text[pos] == ':') {
        ++pos;
        parse_int_field(text, pos, 2);
    }
    if (pos < text.size() && text[pos] != 'Z')
        throw ContractError("trailing characters in timestamp");
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || hh > 23 || mm > 59)
        throw ContractError("invalid calendar timestamp");
    const auto days_since_epoch = sys_days{ymd}.time_since_epoch().count();
    return static_cast<std::int64_t>(days_since_epoch) * 1440 + hh * 60 + mm;
}

std::string format_iso8601_minutes(std::int64_t minutes)
{
    using namespace std::chrono;
    auto days_count = minutes >= 0 ? minutes / 1440 : -((-minutes + 1439) / 1440);
    const auto rem = minutes - days_count * 1440;
    const year_month_day ymd{sys_days{days{days_count}}};
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02d:%02d:00", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), static_cast<int>(rem / 60),
                  static_cast<int>(rem % 60));
    return buf;
}

CityData load_city(const CityFiles& files)
{
    // Metadata
    std::string city_id;
    int interval = 0;
    std::size_t n_nodes = 0;
    try {
        auto meta = nlohmann::json::parse(read_file(files.meta));
        city_id = meta.at("city_id").get<std::string>();
        interval = meta.at("interval_minutes").get<int>();
        n_nodes = meta.at("n_nodes").get<std::size_t>();
    } catch (const nlohmann::json::exception& ex) {
        throw LoadError(files.meta.string() + ":1: " + ex.what());
    }
    if (interval <= 0)
        fail(files.meta, 1, "interval_minutes must be positive");
    if (n_nodes == 0)
        fail(files.meta, 1, "n_nodes must be positive");

    // Adjacency
    std::vector<Edge> edges;
    {
        const auto text = read_file(files.adjacency);
        std::vector<std::string_view> fields;
        for_each_line(text, [&](std::string_view line, std::size_t lineno) {
            split_fields(line, fields);
            if (fields.size() != 3)
                fail(files.adjacency, lineno, "expected src,dst,weight");
            Edge e;
            if (!parse_size(fields[0], e.src) || !parse_size(fields[1], e.dst)) {
                if (lineno == 1)
                    return; // header row
                fail(files.adjacency, lineno, "node index is not a non-negative integer");
            }
            if (!parse_double(fields[2], e.weight))
                fail(files.adjacency, lineno, "weight is not a number");
            if (e.weight < 0.0)
                fail(files.adjacency, lineno, "negative weight");
            if (e.src >= n_nodes || e.dst >= n_nodes)
                fail(files.adjacency, lineno, "node index out of range [0, " + std::to_string(n_nodes) + ")");
            edges.push_back(e);
        });
    }

    // Speeds
    SpeedSeries series;
    series.city_id = city_id;
    series.interval_minutes = interval;
    std::vector<double> values;
    {
        const auto text = read_file(files.speed);
        std::vector<std::string_view> fields;
        bool header = true;
        for_each_line(text, [&](std::string_view line, std::size_t lineno) {
            split_fields(line, fields);
            if (header) {
                if (fields.size() != n_nodes + 1)
                    fail(files.speed, lineno,
                         "header has " + std::to_string(fields.size() - 1) + " node columns, metadata says "
                             + std::to_string(n_nodes));
                for (std::size_t i = 1; i < fields.size(); ++i)
                    series.node_ids.emplace_back(fields[i]);
                header = false;
                values.reserve(n_nodes * 1024);
                return;
            }
            if (fields.size() != n_nodes + 1)
                fail(files.speed, lineno,
                     "expected " + std::to_string(n_nodes + 1) + " columns, got " + std::to_string(fields.size()));
            std::int64_t ts = 0;
            try {
                ts = parse_iso8601_minutes(fields[0]);
            } catch (const ContractError& ex) {
                fail(files.speed, lineno, std::string("bad timestamp '") + std::string(fields[0]) + "': " + ex.what());
            }
            if (!series.timestamps.empty()) {
                const auto prev = series.timestamps.back();
                if (ts <= prev)
                    fail(files.speed, lineno, "timestamps are not strictly increasing");
                if (ts - prev != interval)
                    fail(files.speed, lineno,
                         "timestamp gap of " + std::to_string(ts - prev) + " min, expected "
                             + std::to_string(interval));
            }
            series.timestamps.push_back(ts);
            for (std::size_t i = 1; i < fields.size(); ++i) {
                double v = 0.0;
                const auto f = fields[i];
                if (f.empty() || f == "nan" || f == "NaN") {
                    v = 0.0;
                } else if (!parse_double(f, v) || !std::isfinite(v)) {
                    fail(files.speed, lineno, "bad speed value '" + std::string(f) + "'");
                }
                values.push_back(v);
                series.valid.push_back(v != 0.0 ? 1 : 0);
            }
        });
        if (header)
            fail(files.speed, 1, "empty speed file");
        if (series.timestamps.empty())
            fail(files.speed, 2, "no data rows");
    }
    series.values = DenseArray::matrix(series.timestamps.size(), n_nodes, std::move(values));

    try {
        return CityData{TrafficGraph(city_id, n_nodes, edges, interval), std::move(series)};
    } catch (const LoadError& ex) {
        throw LoadError(files.adjacency.string() + ": " + ex.what());
    }
}

CityData load_city(const fs::path& speed_file, const fs::path& adjacency_file, const fs::path& meta_file)
{
    return load_city(CityFiles{speed_file, adjacency_file, meta_file});
}

void write_city(const CityData& city, const CityFiles& files)
{
    const auto& s = city.series;
    const auto& g = city.graph;
    {
        std::ofstream out(files.meta, std::ios::trunc);
        nlohmann::json meta = {
            {"city_id", g.city_id()}, {"interval_minutes", g.interval_minutes()}, {"n_nodes", g.n_nodes()}};
        out << meta.dump(2) << '\n';
        if (!out)
            throw Error("write failed for " + files.meta.string());
    }
    {
        std::ofstream out(files.adjacency, std::ios::trunc);
        char buf[96];
        for (const auto& e : g.edges()) {
            std::snprintf(buf, sizeof(buf), "%zu,%zu,%.6f\n", e.src, e.dst, e.weight);
            out << buf;
        }
        if (!out)
            throw Error("write failed for " + files.adjacency.string());
    }
    {
        std::ofstream out(files.speed, std::ios::trunc);
        out << "timestamp";
        for (const auto& id : s.node_ids)
            out << ',' << id;
        out << '\n';
        char buf[64];
        const auto n = s.n_nodes();
        for (std::size_t t = 0; t < s.steps(); ++t) {
            out << format_iso8601_minutes(s.timestamps[t]);
            for (std::size_t i = 0; i < n; ++i) {
                if (s.valid[t * n + i])
                    std::snprintf(buf, sizeof(buf), ",%.6f", s.values(t, i));
                else
                    std::snprintf(buf, sizeof(buf), ",0");
                out << buf;
            }
            out << '\n';
        }
        if (!out)
            throw Error("write failed for " + files.speed.string());
    }
}

} // namespace stda
