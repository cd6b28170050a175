#include "kbstab/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

namespace kbstab {

namespace {

// Iterates over lines, skipping blank and '#' comment lines; reports 1-based
// line numbers.
template <class Fn>
void for_each_record(std::string_view content, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < content.size()) {
    std::size_t end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    std::string_view line = content.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    fn(line, line_no);
  }
}

void expect_fields(const std::vector<std::string_view>& fields, std::size_t n, const std::string& source,
                   std::size_t line) {
  if (fields.size() != n) {
    throw ParseError(source, line,
                     "expected " + std::to_string(n) + " fields, found " + std::to_string(fields.size()));
  }
}

// Prefixes validation failures of a single line with its position.
template <class Fn>
auto at_line(const std::string& source, std::size_t line, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ValidationError& e) {
    throw ValidationError(source + ":" + std::to_string(line) + ": " + e.what());
  }
}

// Date fields that fail to parse make the line malformed.
KbTimestamp date_field(std::string_view date, std::string_view prec, const std::string& source, std::size_t line) {
  try {
    return KbTimestamp::parse(date, parse_precision_tag(prec));
  } catch (const ValidationError& e) {
    throw ParseError(source, line, e.what());
  }
}

KbTimestamp compact_field(std::string_view text, const std::string& source, std::size_t line) {
  try {
    return KbTimestamp::parse_compact(text);
  } catch (const ValidationError& e) {
    throw ParseError(source, line, e.what());
  }
}

std::optional<KbTimestamp> optional_date_field(std::string_view date, std::string_view prec,
                                               const std::string& source, std::size_t line) {
  if (date.empty() && prec.empty()) return std::nullopt;
  if (date.empty() || prec.empty()) throw ParseError(source, line, "valid time needs both date and precision");
  return date_field(date, prec, source, line);
}

}  // namespace

std::string_view to_string(ChangeLabel label) {
  switch (label) {
    case ChangeLabel::none: return "none";
    case ChangeLabel::correction: return "correction";
    case ChangeLabel::completion: return "completion";
    case ChangeLabel::real_world: return "real_world";
  }
  return "?";
}

ChangeLabel parse_change_label(std::string_view text) {
  if (text == "none") return ChangeLabel::none;
  if (text == "correction") return ChangeLabel::correction;
  if (text == "completion") return ChangeLabel::completion;
  if (text == "real_world") return ChangeLabel::real_world;
  throw ValidationError("unknown label '" + std::string(text) + "'");
}

std::string_view to_string(EditKind kind) {
  switch (kind) {
    case EditKind::add: return "add";
    case EditKind::remove: return "remove";
    case EditKind::modify: return "modify";
  }
  return "?";
}

EditKind parse_edit_kind(std::string_view text) {
  if (text == "add") return EditKind::add;
  if (text == "remove") return EditKind::remove;
  if (text == "modify") return EditKind::modify;
  throw ValidationError("unknown edit kind '" + std::string(text) + "'");
}

EmbeddingTable::EmbeddingTable(std::size_t dimension) : dimension_(dimension) {
  if (dimension_ == 0) throw ValidationError("embedding dimension must be positive");
}

void EmbeddingTable::insert(const EntityId& entity, std::vector<double> values) {
  if (values.size() != dimension_) {
    throw ValidationError("embedding for " + entity.str() + " has dimension " + std::to_string(values.size()) +
                          ", expected " + std::to_string(dimension_));
  }
  if (!std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); })) {
    throw ValidationError("embedding for " + entity.str() + " has non-finite components");
  }
  if (!rows_.emplace(entity.str(), std::move(values)).second) {
    throw ValidationError("duplicate embedding for " + entity.str());
  }
}

const std::vector<double>* EmbeddingTable::find(const EntityId& entity) const {
  auto it = rows_.find(entity.str());
  return it == rows_.end() ? nullptr : &it->second;
}

const std::vector<double>& EmbeddingTable::at(const EntityId& entity) const {
  if (const auto* row = find(entity)) return *row;
  throw ValidationError("missing embedding for " + entity.str());
}

std::vector<EntityId> EmbeddingTable::ids() const {
  std::vector<EntityId> out;
  out.reserve(rows_.size());
  for (const auto& [id, _] : rows_) out.emplace_back(id);
  std::sort(out.begin(), out.end());
  return out;
}

EmbeddingTable EmbeddingTable::scaled(double factor) const {
  EmbeddingTable out(dimension_);
  for (const auto& [id, row] : rows_) {
    std::vector<double> v = row;
    for (double& x : v) x *= factor;
    out.rows_.emplace(id, std::move(v));
  }
  return out;
}

std::string escape_field(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  for (char c : raw) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out += c;
    }
  }
  return out;
}

std::string unescape_field(std::string_view escaped) {
  std::string out;
  out.reserve(escaped.size());
  for (std::size_t i = 0; i < escaped.size(); ++i) {
    char c = escaped[i];
    if (c != '\\') {
      out += c;
      continue;
    }
    if (++i == escaped.size()) throw ValidationError("dangling escape at end of field");
    switch (escaped[i]) {
      case '\\': out += '\\'; break;
      case 't': out += '\t'; break;
      case 'n': out += '\n'; break;
      case 'r': out += '\r'; break;
      default: throw ValidationError(std::string("unknown escape \\") + escaped[i]);
    }
  }
  return out;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t pos = 0;
  while (true) {
    const std::size_t tab = line.find('\t', pos);
    if (tab == std::string_view::npos) {
      fields.push_back(line.substr(pos));
      return fields;
    }
    fields.push_back(line.substr(pos, tab - pos));
    pos = tab + 1;
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string content;
  in.seekg(0, std::ios::end);
  content.resize(static_cast<std::size_t>(in.tellg()));
  in.seekg(0, std::ios::beg);
  in.read(content.data(), static_cast<std::streamsize>(content.size()));
  if (!in) throw IoError("error reading " + path.string());
  return content;
}

Snapshot parse_snapshot(std::string_view content, const std::string& source) {
  std::optional<KbTimestamp> sampled_at;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  // Header: first non-blank line.
  while (pos < content.size() && !sampled_at) {
    std::size_t end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    std::string_view line = content.substr(pos, end - pos);
    ++line_no;
    pos = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    if (fields.size() != 3 || fields[0] != "#snapshot") {
      throw ParseError(source, line_no, "missing '#snapshot<TAB>date<TAB>precision' header");
    }
    sampled_at = date_field(fields[1], fields[2], source, line_no);
  }
  if (!sampled_at) throw ParseError(source, 1, "missing snapshot header");

  std::vector<Fact> facts;
  facts.reserve(content.size() / 48);
  const std::size_t header_lines = line_no;
  for_each_record(content.substr(std::min(pos, content.size())), [&](std::string_view line, std::size_t n) {
    const std::size_t at = header_lines + n;
    const auto f = split_tabs(line);
    expect_fields(f, 8, source, at);
    facts.push_back(at_line(source, at, [&] {
      ObjectValue object = f[2] == "entity"    ? ObjectValue::entity(unescape_field(f[3]))
                           : f[2] == "literal" ? ObjectValue::literal(unescape_field(f[3]))
                                               : throw ValidationError("unknown object kind '" +
                                                                       std::string(f[2]) + "'");
      if (f[6].empty() || f[7].empty()) throw ParseError(source, at, "missing transaction time");
      return Fact{EntityId(std::string(f[0])), PropertyId(std::string(f[1])), std::move(object),
                  optional_date_field(f[4], f[5], source, at), date_field(f[6], f[7], source, at)};
    }));
  });
  return Snapshot(*sampled_at, std::move(facts), DuplicatePolicy::keep_earliest);
}

Snapshot load_snapshot(const std::filesystem::path& path) {
  return parse_snapshot(read_file(path), path.string());
}

void write_snapshot(std::ostream& out, const Snapshot& snapshot) {
  std::string buf;
  buf.reserve(1 << 16);
  const auto flush = [&] {
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    buf.clear();
  };
  buf += "#snapshot\t" + snapshot.sampled_at().iso_date() + '\t' + precision_tag(snapshot.sampled_at().precision()) + '\n';
  for (const Fact& f : snapshot.facts()) {
    buf += f.subject.str();
    buf += '\t';
    buf += f.property.str();
    buf += '\t';
    buf += to_string(f.object.kind());
    buf += '\t';
    buf += escape_field(f.object.text());
    buf += '\t';
    if (f.valid_time) {
      buf += f.valid_time->iso_date();
      buf += '\t';
      buf += precision_tag(f.valid_time->precision());
    } else {
      buf += '\t';
    }
    buf += '\t';
    buf += f.transaction_time.iso_date();
    buf += '\t';
    buf += precision_tag(f.transaction_time.precision());
    buf += '\n';
    if (buf.size() > (1 << 16)) flush();
  }
  flush();
}

std::string snapshot_to_string(const Snapshot& snapshot) {
  std::ostringstream out;
  write_snapshot(out, snapshot);
  return out.str();
}

std::vector<EditLogEntry> parse_edit_log(std::string_view content, const std::string& source) {
  std::vector<EditLogEntry> out;
  for_each_record(content, [&](std::string_view line, std::size_t n) {
    const auto f = split_tabs(line);
    expect_fields(f, 4, source, n);
    out.push_back(at_line(source, n, [&] {
      return EditLogEntry{EntityId(std::string(f[0])), PropertyId(std::string(f[1])),
                          compact_field(f[2], source, n), parse_edit_kind(f[3])};
    }));
  });
  return out;
}

std::vector<EditLogEntry> load_edit_log(const std::filesystem::path& path) {
  return parse_edit_log(read_file(path), path.string());
}

void write_edit_log(std::ostream& out, const std::vector<EditLogEntry>& entries) {
  for (const auto& e : entries) {
    out << e.subject.str() << '\t' << e.property.str() << '\t' << e.transaction_time.compact() << '\t'
        << to_string(e.kind) << '\n';
  }
}

std::vector<ArticleVersion> parse_articles(std::string_view content, const std::string& source) {
  std::vector<ArticleVersion> out;
  for_each_record(content, [&](std::string_view line, std::size_t n) {
    const auto f = split_tabs(line);
    expect_fields(f, 3, source, n);
    out.push_back(at_line(source, n, [&] {
      return ArticleVersion{EntityId(std::string(f[0])), compact_field(f[1], source, n), unescape_field(f[2])};
    }));
  });
  return out;
}

std::vector<ArticleVersion> load_articles(const std::filesystem::path& path) {
  return parse_articles(read_file(path), path.string());
}

void write_articles(std::ostream& out, const std::vector<ArticleVersion>& articles) {
  for (const auto& a : articles) {
    out << a.entity.str() << '\t' << a.as_of.compact() << '\t' << escape_field(a.text) << '\n';
  }
}

EmbeddingTable parse_embeddings(std::string_view content, const std::string& source) {
  std::optional<EmbeddingTable> table;
  for_each_record(content, [&](std::string_view line, std::size_t n) {
    const auto f = split_tabs(line);
    if (f.size() < 2) throw ParseError(source, n, "embedding row needs an id and at least one value");
    at_line(source, n, [&] {
      EntityId id{std::string(f[0])};
      std::vector<double> values;
      values.reserve(f.size() - 1);
      for (std::size_t i = 1; i < f.size(); ++i) {
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(f[i].data(), f[i].data() + f[i].size(), v);
        if (ec != std::errc{} || ptr != f[i].data() + f[i].size()) {
          throw ParseError(source, n, "embedding for " + id.str() + " has non-numeric value '" + std::string(f[i]) + "'");
        }
        values.push_back(v);
      }
      if (!table) table.emplace(values.size());
      table->insert(id, std::move(values));
    });
  });
  if (!table) throw ParseError(source + ": no embedding rows");
  return std::move(*table);
}

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
  return parse_embeddings(read_file(path), path.string());
}

void write_embeddings(std::ostream& out, const EmbeddingTable& table) {
  char buf[32];
  for (const auto& id : table.ids()) {
    out << id.str();
    for (double v : table.at(id)) {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
      out << '\t' << std::string_view(buf, static_cast<std::size_t>(ptr - buf));
    }
    out << '\n';
  }
}

std::vector<GoldLabel> parse_labels(std::string_view content, const std::string& source) {
  std::vector<GoldLabel> out;
  for_each_record(content, [&](std::string_view line, std::size_t n) {
    const auto f = split_tabs(line);
    expect_fields(f, 5, source, n);
    out.push_back(at_line(source, n, [&] {
      return GoldLabel{EntityId(std::string(f[0])), PropertyId(std::string(f[1])),
                       Interval(compact_field(f[2], source, n), compact_field(f[3], source, n)),
                       parse_change_label(f[4])};
    }));
  });
  return out;
}

std::vector<GoldLabel> load_labels(const std::filesystem::path& path) {
  return parse_labels(read_file(path), path.string());
}

void write_labels(std::ostream& out, const std::vector<GoldLabel>& labels) {
  for (const auto& g : labels) {
    out << g.subject.str() << '\t' << g.property.str() << '\t' << g.interval.tau1().compact() << '\t'
        << g.interval.tau2().compact() << '\t' << to_string(g.label) << '\n';
  }
}

std::vector<EntityId> load_entity_list(const std::filesystem::path& path) {
  std::vector<EntityId> out;
  const std::string content = read_file(path);
  for_each_record(content, [&](std::string_view line, std::size_t n) {
    const auto f = split_tabs(line);
    out.push_back(at_line(path.string(), n, [&] { return EntityId(std::string(f[0])); }));
  });
  return out;
}

std::map<PropertyId, bool> load_property_labels(const std::filesystem::path& path) {
  std::map<PropertyId, bool> out;
  const std::string content = read_file(path);
  for_each_record(content, [&](std::string_view line, std::size_t n) {
    const auto f = split_tabs(line);
    expect_fields(f, 2, path.string(), n);
    if (f[1] != "unstable" && f[1] != "stable") {
      throw ParseError(path.string(), n, "expected 'unstable' or 'stable', got '" + std::string(f[1]) + "'");
    }
    at_line(path.string(), n, [&] { out.insert_or_assign(PropertyId(std::string(f[0])), f[1] == "unstable"); });
  });
  return out;
}

}  // namespace kbstab
