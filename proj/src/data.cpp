#include "cave/data.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

#include "cave/error.hpp"

namespace cave {

namespace {

using nlohmann::json;

constexpr std::string_view kUserHeader = "user_id,gender,age_level,user_tag";
constexpr std::string_view kItemHeader = "item_id,cat_1,cat_2,cat_3,cat_4,duration";

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_number(std::string_view field, const std::string& file, std::size_t line,
               std::string_view name) {
  field = trim(field);
  T value{};
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc() || ptr != end || field.empty()) {
    throw ParseError(file, line, "bad " + std::string(name) + " '" + std::string(field) + "'");
  }
  return value;
}

void check_range(int value, int max, std::string_view name) {
  if (value < 0 || value > max) {
    throw RangeError(std::string(name) + " = " + std::to_string(value) + " outside 0.." +
                     std::to_string(max));
  }
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

std::vector<double> real_list(const json& obj, const char* key, bool required,
                              const std::string& file, std::size_t line) {
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) {
    if (required) throw ParseError(file, line, std::string("missing key ") + key);
    return {};
  }
  if (!it->is_array()) throw ParseError(file, line, std::string(key) + " is not an array");
  std::vector<double> out;
  out.reserve(it->size());
  for (const auto& v : *it) {
    if (!v.is_number()) throw ParseError(file, line, std::string(key) + " has a non-numeric entry");
    out.push_back(v.get<double>());
  }
  return out;
}

std::int64_t int_field(const json& obj, const char* key, const std::string& file,
                       std::size_t line) {
  const auto it = obj.find(key);
  if (it == obj.end() || !it->is_number_integer()) {
    throw ParseError(file, line, std::string("missing or non-integer ") + key);
  }
  return it->get<std::int64_t>();
}

}  // namespace

void UserProfile::validate() const {
  check_range(gender, kGenderMax, "gender");
  check_range(age_level, kAgeLevelMax, "age_level");
  check_range(user_tag, kUserTagMax, "user_tag");
}

void ItemProfile::validate() const {
  static constexpr std::array<std::string_view, 4> names{"cat_1", "cat_2", "cat_3", "cat_4"};
  for (std::size_t c = 0; c < cat.size(); ++c) check_range(cat[c], kItemCategoryMax[c], names[c]);
  if (!(duration_ms >= 0.0)) throw RangeError("duration must be nonnegative");
}

LabelKind parse_label_kind(std::string_view name) {
  if (name == "completion") return LabelKind::kCompletion;
  if (name == "positive") return LabelKind::kPositive;
  if (name == "longview") return LabelKind::kLongview;
  throw ConfigError("unknown label kind '" + std::string(name) + "'");
}

std::string_view to_string(LabelKind kind) {
  switch (kind) {
    case LabelKind::kCompletion: return "completion";
    case LabelKind::kPositive: return "positive";
    case LabelKind::kLongview: return "longview";
  }
  return "completion";
}

const std::vector<double>& Request::labels(LabelKind kind) const {
  switch (kind) {
    case LabelKind::kPositive: return label_positive;
    case LabelKind::kLongview: return label_longview;
    case LabelKind::kCompletion: break;
  }
  return label_completion;
}

void Request::validate() const {
  const auto m = items.size();
  if (m == 0 || m > kMaxListLength) {
    throw IntegrityError("request " + std::to_string(request_id) + " has " + std::to_string(m) +
                         " items, expected 1.." + std::to_string(kMaxListLength));
  }
  for (const auto& f : aux_feats) {
    if (f.size() != m) throw IntegrityError("request " + std::to_string(request_id) +
                                            ": feature list length mismatch");
  }
  auto check_labels = [&](const std::vector<double>& l, bool binary, std::string_view name) {
    if (l.empty()) return;
    if (l.size() != m) {
      throw IntegrityError("request " + std::to_string(request_id) + ": " + std::string(name) +
                           " length mismatch");
    }
    for (double v : l) {
      const bool ok = binary ? (v == 0.0 || v == 1.0) : (v >= 0.0 && v <= 1.0);
      if (!ok) {
        throw RangeError("request " + std::to_string(request_id) + ": " + std::string(name) +
                         " value " + std::to_string(v) + " out of range");
      }
    }
  };
  check_labels(label_completion, false, "label_completion");
  check_labels(label_positive, true, "label_positive");
  check_labels(label_longview, true, "label_longview");
  if (exit_position && (*exit_position < 1 || *exit_position > static_cast<int>(m))) {
    throw RangeError("request " + std::to_string(request_id) + ": exit_position out of range");
  }
}

int Session::exit_index() const {
  int total = 0;
  for (const auto& r : requests) total += r.consumed_length();
  return total;
}

template <typename Profile>
bool ProfileTable<Profile>::insert(const Profile& p) {
  std::int64_t id;
  if constexpr (std::is_same_v<Profile, UserProfile>) id = p.user_id;
  else id = p.item_id;
  if (!index_.emplace(id, rows_.size()).second) return false;
  rows_.push_back(p);
  return true;
}

template <typename Profile>
const Profile* ProfileTable<Profile>::find(std::int64_t id) const {
  const auto it = index_.find(id);
  return it == index_.end() ? nullptr : &rows_[it->second];
}

template <typename Profile>
const Profile& ProfileTable<Profile>::at(std::int64_t id) const {
  const auto* p = find(id);
  if (!p) throw IntegrityError("unknown id " + std::to_string(id));
  return *p;
}

template class ProfileTable<UserProfile>;
template class ProfileTable<ItemProfile>;

std::size_t Dataset::num_sessions() const {
  std::size_t n = 0;
  for (const auto& h : histories) n += h.sessions.size();
  return n;
}

std::size_t Dataset::num_requests() const {
  std::size_t n = 0;
  for (const auto& h : histories)
    for (const auto& s : h.sessions) n += s.requests.size();
  return n;
}

void Dataset::validate() const {
  if (!users || !items) throw IntegrityError("dataset is missing its profile tables");
  for (const auto& h : histories) {
    if (!users->find(h.user_id)) {
      throw IntegrityError("dangling user_id " + std::to_string(h.user_id));
    }
    for (const auto& s : h.sessions) {
      if (s.requests.empty()) throw IntegrityError("empty session " + std::to_string(s.session_id));
      for (const auto& r : s.requests) {
        r.validate();
        for (auto id : r.items) {
          if (!items->find(id)) {
            throw IntegrityError("request " + std::to_string(r.request_id) +
                                 " references dangling item_id " + std::to_string(id));
          }
        }
      }
    }
  }
}

UserProfile parse_user_row(std::string_view line, const std::string& file, std::size_t line_no) {
  const auto f = split_csv(line);
  if (f.size() != 4) throw ParseError(file, line_no, "expected 4 fields");
  UserProfile u;
  u.user_id = parse_number<std::int64_t>(f[0], file, line_no, "user_id");
  u.gender = parse_number<int>(f[1], file, line_no, "gender");
  u.age_level = parse_number<int>(f[2], file, line_no, "age_level");
  u.user_tag = parse_number<int>(f[3], file, line_no, "user_tag");
  try {
    u.validate();
  } catch (const RangeError& e) {
    throw RangeError(file + ":" + std::to_string(line_no) + ": " + e.what());
  }
  return u;
}

ItemProfile parse_item_row(std::string_view line, const std::string& file, std::size_t line_no) {
  const auto f = split_csv(line);
  if (f.size() != 6) throw ParseError(file, line_no, "expected 6 fields");
  ItemProfile it;
  it.item_id = parse_number<std::int64_t>(f[0], file, line_no, "item_id");
  for (int c = 0; c < 4; ++c) {
    it.cat[c] = parse_number<int>(f[1 + c], file, line_no, "cat");
  }
  it.duration_ms = parse_number<double>(f[5], file, line_no, "duration");
  try {
    it.validate();
  } catch (const RangeError& e) {
    throw RangeError(file + ":" + std::to_string(line_no) + ": " + e.what());
  }
  return it;
}

Request parse_request_line(std::string_view line, const std::string& file, std::size_t line_no) {
  json obj;
  try {
    obj = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(file, line_no, e.what());
  }
  if (!obj.is_object()) throw ParseError(file, line_no, "expected a JSON object");
  Request r;
  r.session_id = int_field(obj, "session_id", file, line_no);
  r.request_id = int_field(obj, "request_id", file, line_no);
  r.user_id = int_field(obj, "user_id", file, line_no);
  const auto items = obj.find("item_id_list");
  if (items == obj.end() || !items->is_array()) {
    throw ParseError(file, line_no, "missing item_id_list");
  }
  for (const auto& v : *items) {
    if (!v.is_number_integer()) throw ParseError(file, line_no, "non-integer item id");
    r.items.push_back(v.get<std::int64_t>());
  }
  for (int f = 0; f < kNumAuxFeatures; ++f) {
    const std::string key = "feat_list" + std::to_string(f + 1);
    r.aux_feats[f] = real_list(obj, key.c_str(), false, file, line_no);
    if (r.aux_feats[f].empty()) r.aux_feats[f].assign(r.items.size(), 0.0);
  }
  r.label_completion = real_list(obj, "label_completion", false, file, line_no);
  r.label_positive = real_list(obj, "label_positive", false, file, line_no);
  r.label_longview = real_list(obj, "label_longview", false, file, line_no);
  if (const auto e = obj.find("exit_position"); e != obj.end() && !e->is_null()) {
    if (!e->is_number_integer()) throw ParseError(file, line_no, "non-integer exit_position");
    r.exit_position = e->get<int>();
  }
  try {
    r.validate();
  } catch (const Error& e) {
    throw ParseError(file, line_no, e.what());
  }
  return r;
}

std::string format_request_line(const Request& r) {
  json obj = json::object();
  obj["session_id"] = r.session_id;
  obj["request_id"] = r.request_id;
  obj["user_id"] = r.user_id;
  obj["item_id_list"] = r.items;
  for (int f = 0; f < kNumAuxFeatures; ++f) {
    obj["feat_list" + std::to_string(f + 1)] = r.aux_feats[f];
  }
  if (!r.label_completion.empty()) obj["label_completion"] = r.label_completion;
  if (!r.label_positive.empty()) obj["label_positive"] = r.label_positive;
  if (!r.label_longview.empty()) obj["label_longview"] = r.label_longview;
  if (r.exit_position) obj["exit_position"] = *r.exit_position;
  return obj.dump();
}

Dataset load_dataset(const std::filesystem::path& user_path,
                     const std::filesystem::path& item_path,
                     const std::filesystem::path& request_path, LabelKind label_kind) {
  Dataset data;
  data.label_kind = label_kind;

  auto users = std::make_shared<UserTable>();
  {
    const auto lines = read_lines(user_path);
    const auto file = user_path.string();
    if (lines.empty() || trim(lines[0]) != kUserHeader) {
      throw ParseError(file, 1, "expected header '" + std::string(kUserHeader) + "'");
    }
    for (std::size_t i = 1; i < lines.size(); ++i) {
      if (trim(lines[i]).empty()) continue;
      if (!users->insert(parse_user_row(lines[i], file, i + 1))) {
        throw IntegrityError(file + ":" + std::to_string(i + 1) + ": duplicate user_id");
      }
    }
  }
  auto items = std::make_shared<ItemTable>();
  {
    const auto lines = read_lines(item_path);
    const auto file = item_path.string();
    if (lines.empty() || trim(lines[0]) != kItemHeader) {
      throw ParseError(file, 1, "expected header '" + std::string(kItemHeader) + "'");
    }
    for (std::size_t i = 1; i < lines.size(); ++i) {
      if (trim(lines[i]).empty()) continue;
      if (!items->insert(parse_item_row(lines[i], file, i + 1))) {
        throw IntegrityError(file + ":" + std::to_string(i + 1) + ": duplicate item_id");
      }
    }
  }

  // Requests are grouped into sessions and sessions into users in file order.
  std::unordered_map<std::int64_t, std::size_t> user_slot;
  std::unordered_map<std::int64_t, std::pair<std::size_t, std::size_t>> session_slot;
  const auto lines = read_lines(request_path);
  const auto file = request_path.string();
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    Request r = parse_request_line(lines[i], file, i + 1);
    if (!users->find(r.user_id)) {
      throw IntegrityError(file + ":" + std::to_string(i + 1) + ": dangling user_id " +
                           std::to_string(r.user_id));
    }
    for (auto id : r.items) {
      if (!items->find(id)) {
        throw IntegrityError(file + ":" + std::to_string(i + 1) + ": dangling item_id " +
                             std::to_string(id));
      }
    }
    auto [uit, new_user] = user_slot.emplace(r.user_id, data.histories.size());
    if (new_user) data.histories.push_back(UserHistory{r.user_id, {}});
    auto& history = data.histories[uit->second];
    auto sit = session_slot.find(r.session_id);
    if (sit == session_slot.end()) {
      Session s;
      s.session_id = r.session_id;
      s.user_id = r.user_id;
      s.chrono_index = history.sessions.size();
      sit = session_slot.emplace(r.session_id, std::pair{uit->second, history.sessions.size()})
                .first;
      history.sessions.push_back(std::move(s));
    } else if (sit->second.first != uit->second) {
      throw IntegrityError(file + ":" + std::to_string(i + 1) + ": session " +
                           std::to_string(r.session_id) + " spans several users");
    }
    data.histories[sit->second.first].sessions[sit->second.second].requests.push_back(
        std::move(r));
  }
  if (data.histories.empty()) {
    data.warnings.push_back("request file " + file + " contains no requests");
  }
  data.users = std::move(users);
  data.items = std::move(items);
  return data;
}

Dataset load_dataset_dir(const std::filesystem::path& dir, LabelKind label_kind) {
  return load_dataset(dir / "users.csv", dir / "items.csv", dir / "requests.jsonl", label_kind);
}

void write_dataset(const Dataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "users.csv");
    out << kUserHeader << '\n';
    for (const auto& u : data.users->rows()) {
      out << u.user_id << ',' << u.gender << ',' << u.age_level << ',' << u.user_tag << '\n';
    }
  }
  {
    std::ofstream out(dir / "items.csv");
    out << kItemHeader << '\n';
    for (const auto& it : data.items->rows()) {
      out << it.item_id;
      for (int c : it.cat) out << ',' << c;
      out << ',' << json(it.duration_ms).dump() << '\n';
    }
  }
  std::ofstream out(dir / "requests.jsonl");
  for (const auto& h : data.histories)
    for (const auto& s : h.sessions)
      for (const auto& r : s.requests) out << format_request_line(r) << '\n';
  if (!out) throw Error("failed writing dataset to " + dir.string());
}

std::vector<Request> segment_session(std::span<const ConsumedItem> items,
                                     std::size_t list_length) {
  if (items.empty()) throw Error("segment_session: empty item sequence");
  if (list_length == 0) throw ConfigError("segment_session: list length must be positive");
  std::vector<Request> out;
  for (std::size_t start = 0; start < items.size(); start += list_length) {
    const auto chunk = items.subspan(start, std::min(list_length, items.size() - start));
    Request r;
    for (const auto& it : chunk) {
      r.items.push_back(it.item_id);
      for (int f = 0; f < kNumAuxFeatures; ++f) r.aux_feats[f].push_back(it.aux[f]);
      r.label_completion.push_back(it.completion);
      r.label_positive.push_back(it.positive);
      r.label_longview.push_back(it.longview);
    }
    out.push_back(std::move(r));
  }
  return out;
}

Split chronological_split(const Dataset& data) {
  auto shell = [&] {
    Dataset d;
    d.users = data.users;
    d.items = data.items;
    d.label_kind = data.label_kind;
    return d;
  };
  Split split{shell(), shell(), shell(), 0};
  for (const auto& h : data.histories) {
    const auto n = h.sessions.size();
    if (n < 3) {
      ++split.dropped_users;
      continue;
    }
    UserHistory train{h.user_id, {h.sessions.begin(), h.sessions.end() - 2}};
    split.train.histories.push_back(std::move(train));
    split.val.histories.push_back(UserHistory{h.user_id, {h.sessions[n - 2]}});
    split.test.histories.push_back(UserHistory{h.user_id, {h.sessions[n - 1]}});
  }
  if (split.test.histories.empty()) {
    throw Error("chronological_split: no user has at least three sessions");
  }
  return split;
}

double consumption_label(const Request& request, LabelKind kind) {
  const auto& labels = request.labels(kind);
  if (labels.empty()) {
    throw Error("request " + std::to_string(request.request_id) + " has no " +
                std::string(to_string(kind)) + " labels");
  }
  double total = 0.0;
  for (double v : labels) total += v;
  return total;
}

}  // namespace cave
