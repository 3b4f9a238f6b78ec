#include <array>
#include "inlik/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "inlik/csv.hpp"
#include "inlik/error.hpp"

namespace inlik {
namespace {

using nlohmann::json;

constexpr std::string_view kIdiomTemplate =
    "Is the expression '{target_expression}' used figuratively or literally in the sentence: "
    "{sentence} Answer 'i' for figurative, 'l' for literal.  Put your answer after 'output: '.";
constexpr std::string_view kMetaphorTemplate =
    "Is the word '{target_word}' used metaphorically or literally in the sentence: {sentence} "
    "Answer 'm' for metaphorical, 'l' for literal.  Put your answer after 'output: '.";
constexpr std::string_view kMetonymyTemplate =
    "Is the word '{target_word}' used metonymically or literally in the sentence: {sentence} "
    "Answer 'm' for metonymical, 'l' for literal.  Put your answer after 'output: '.";

constexpr std::string_view kChoiceHeader = "The following are multiple choice questions.";
constexpr std::string_view kChoiceOptions = "Your options are:";

std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool is_trim_char(unsigned char c) { return std::isspace(c) || std::ispunct(c); }

std::string normalize_answer(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_trim_char(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && is_trim_char(static_cast<unsigned char>(s[e - 1]))) --e;
  return lowercase(s.substr(b, e - b));
}

std::string first_alnum_token(std::string_view s) {
  std::size_t b = 0;
  while (b < s.size() && !std::isalnum(static_cast<unsigned char>(s[b]))) ++b;
  std::size_t e = b;
  while (e < s.size() && std::isalnum(static_cast<unsigned char>(s[e]))) ++e;
  return lowercase(s.substr(b, e - b));
}

// Position just past the last "output<ws>:" marker, case-insensitively.
std::optional<std::size_t> after_last_marker(std::string_view raw) {
  const std::string lower = lowercase(raw);
  constexpr std::string_view kMarker = "output";
  std::optional<std::size_t> found;
  for (std::size_t pos = lower.find(kMarker); pos != std::string::npos;
       pos = lower.find(kMarker, pos + 1)) {
    std::size_t i = pos + kMarker.size();
    while (i < lower.size() && std::isspace(static_cast<unsigned char>(lower[i]))) ++i;
    if (i < lower.size() && lower[i] == ':') found = i + 1;
  }
  return found;
}

// Whole-word spellings models commonly produce instead of the letter label.
std::optional<std::string> label_from_word(std::string_view word, TaskKind task) {
  static const std::unordered_map<std::string, std::string> kIdiom = {
      {"figurative", "i"}, {"figuratively", "i"}, {"idiomatic", "i"},
      {"literal", "l"},    {"literally", "l"}};
  static const std::unordered_map<std::string, std::string> kMetaphor = {
      {"metaphorical", "m"}, {"metaphorically", "m"}, {"metaphoric", "m"},
      {"literal", "l"},      {"literally", "l"}};
  static const std::unordered_map<std::string, std::string> kMetonymy = {
      {"metonymic", "m"}, {"metonymical", "m"}, {"metonymically", "m"},
      {"literal", "l"},   {"literally", "l"}};
  const auto& table = task == TaskKind::idiom      ? kIdiom
                      : task == TaskKind::metaphor ? kMetaphor
                                                   : kMetonymy;
  if (auto it = table.find(std::string(word)); it != table.end()) return it->second;
  return std::nullopt;
}

// Substitutes {target_expression}, {target_word} and {sentence} in one pass,
// recording where the sentence landed.
Prompt fill_template(std::string_view tmpl, const ExampleRecord& rec, std::string_view target) {
  Prompt prompt;
  bool have_sentence = false;
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      const std::size_t close = tmpl.find('}', i);
      if (close != std::string_view::npos) {
        const std::string_view key = tmpl.substr(i + 1, close - i - 1);
        if (key == "sentence") {
          if (have_sentence) throw Error("instruction template contains {sentence} twice");
          prompt.sentence = {prompt.text.size(), prompt.text.size() + rec.sentence.size()};
          prompt.text += rec.sentence;
          have_sentence = true;
          i = close + 1;
          continue;
        }
        if (key == "target_expression" || key == "target_word") {
          prompt.text += target;
          i = close + 1;
          continue;
        }
      }
    }
    prompt.text += tmpl[i++];
  }
  if (!have_sentence) throw Error("instruction template has no {sentence} placeholder");
  return prompt;
}

std::string span_text(const ExampleRecord& rec) {
  if (!rec.expression) return {};
  return rec.sentence.substr(rec.expression->begin, rec.expression->size());
}

std::optional<std::string> record_problem(const ExampleRecord& rec, std::string& field) {
  if (rec.id.empty()) {
    field = "id";
    return "empty id";
  }
  if (rec.expression) {
    const auto& s = *rec.expression;
    if (!(s.begin < s.end && s.end <= rec.sentence.size())) {
      field = "expression";
      return "expression span [" + std::to_string(s.begin) + ", " + std::to_string(s.end) +
             ") out of bounds for sentence of length " + std::to_string(rec.sentence.size());
    }
  }
  if (rec.task == TaskKind::multiple_choice && rec.choices.empty()) {
    field = "choices";
    return "multiple_choice record without choices";
  }
  const auto alphabet = label_alphabet(rec);
  if (std::find(alphabet.begin(), alphabet.end(), rec.gold) == alphabet.end()) {
    field = "gold";
    return "gold label '" + rec.gold + "' not in the task's label alphabet";
  }
  return std::nullopt;
}

void check_row(const ExampleRecord& rec, std::size_t row) {
  std::string field;
  if (auto problem = record_problem(rec, field)) throw ParseError(row, field, *problem);
}

ExampleRecord record_from_json(const json& j, std::size_t row) {
  if (!j.is_object()) throw ParseError(row, "", "expected a JSON object");
  auto required_string = [&](const char* key) -> std::string {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) throw ParseError(row, key, "missing or not a string");
    return it->get<std::string>();
  };
  ExampleRecord rec;
  rec.id = required_string("id");
  rec.sentence = required_string("sentence");
  try {
    rec.task = parse_task(required_string("task"));
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(row, "task", e.what());
  }
  rec.gold = required_string("gold");
  if (auto it = j.find("expression"); it != j.end() && !it->is_null()) {
    if (!it->is_object() || !it->contains("start") || !it->contains("end") ||
        !(*it)["start"].is_number_integer() || !(*it)["end"].is_number_integer()) {
      throw ParseError(row, "expression", "expected {\"start\": int, \"end\": int} or null");
    }
    const auto start = (*it)["start"].get<long long>();
    const auto end = (*it)["end"].get<long long>();
    if (start < 0 || end < 0) throw ParseError(row, "expression", "negative offset");
    rec.expression = CharSpan{static_cast<std::size_t>(start), static_cast<std::size_t>(end)};
  }
  if (auto it = j.find("instruction"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw ParseError(row, "instruction", "expected string or null");
    rec.instruction = it->get<std::string>();
  }
  if (auto it = j.find("choices"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw ParseError(row, "choices", "expected array of strings or null");
    for (const auto& c : *it) {
      if (!c.is_string()) throw ParseError(row, "choices", "expected array of strings");
      rec.choices.push_back(c.get<std::string>());
    }
  }
  check_row(rec, row);
  return rec;
}

json record_to_json(const ExampleRecord& rec) {
  json j;
  j["id"] = rec.id;
  j["sentence"] = rec.sentence;
  j["expression"] = rec.expression ? json{{"start", rec.expression->begin},
                                          {"end", rec.expression->end}}
                                   : json(nullptr);
  j["task"] = std::string(task_name(rec.task));
  j["instruction"] = rec.instruction ? json(*rec.instruction) : json(nullptr);
  j["gold"] = rec.gold;
  j["choices"] = rec.choices.empty() ? json(nullptr) : json(rec.choices);
  return j;
}

constexpr std::array<std::string_view, 7> kCsvColumns = {
    "id", "sentence", "expression", "task", "instruction", "gold", "choices"};

std::size_t parse_offset(const std::string& s, std::size_t row) {
  if (s.empty() || !std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); }))
    throw ParseError(row, "expression", "expected \"start:end\" with non-negative integers");
  return std::stoull(s);
}

std::vector<ExampleRecord> read_csv_dataset(std::istream& in) {
  auto header = csv::read_row(in);
  if (!header) return {};
  std::unordered_map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header->size(); ++i) col[(*header)[i]] = i;
  for (auto name : {"id", "sentence", "task", "gold"}) {
    if (!col.contains(name)) throw ParseError(0, name, "CSV header lacks required column");
  }
  std::vector<ExampleRecord> records;
  std::size_t row = 0;
  while (auto fields = csv::read_row(in)) {
    if (fields->size() == 1 && (*fields)[0].empty()) continue;
    auto get = [&](std::string_view name) -> std::string {
      auto it = col.find(std::string(name));
      if (it == col.end()) return {};
      if (it->second >= fields->size()) throw ParseError(row, std::string(name), "missing column");
      return (*fields)[it->second];
    };
    ExampleRecord rec;
    rec.id = get("id");
    rec.sentence = get("sentence");
    try {
      rec.task = parse_task(get("task"));
    } catch (const Error& e) {
      throw ParseError(row, "task", e.what());
    }
    rec.gold = get("gold");
    if (auto span = get("expression"); !span.empty()) {
      const auto colon = span.find(':');
      if (colon == std::string::npos)
        throw ParseError(row, "expression", "expected \"start:end\"");
      rec.expression = CharSpan{parse_offset(span.substr(0, colon), row),
                                parse_offset(span.substr(colon + 1), row)};
    }
    if (auto instr = get("instruction"); !instr.empty()) rec.instruction = instr;
    if (auto choices = get("choices"); !choices.empty()) {
      std::size_t start = 0;
      while (true) {
        const auto bar = choices.find('|', start);
        rec.choices.push_back(choices.substr(start, bar - start));
        if (bar == std::string::npos) break;
        start = bar + 1;
      }
    }
    check_row(rec, row);
    records.push_back(std::move(rec));
    ++row;
  }
  return records;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

template <typename F>
void for_each_json_line(const std::filesystem::path& path, F&& f) {
  auto in = open_input(path);
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(row, "", e.what());
    }
    f(j, row++);
  }
}

}  // namespace

std::string_view task_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::idiom: return "idiom";
    case TaskKind::metaphor: return "metaphor";
    case TaskKind::metonymy: return "metonymy";
    case TaskKind::multiple_choice: return "multiple_choice";
  }
  return "?";
}

TaskKind parse_task(std::string_view name) {
  if (name == "idiom") return TaskKind::idiom;
  if (name == "metaphor") return TaskKind::metaphor;
  if (name == "metonymy") return TaskKind::metonymy;
  if (name == "multiple_choice") return TaskKind::multiple_choice;
  throw Error("unknown task kind '" + std::string(name) + "'");
}

std::vector<std::string> label_alphabet(const ExampleRecord& rec) {
  switch (rec.task) {
    case TaskKind::idiom: return {"i", "l"};
    case TaskKind::metaphor:
    case TaskKind::metonymy: return {"m", "l"};
    case TaskKind::multiple_choice: return rec.choices;
  }
  return {};
}

void check_record(const ExampleRecord& rec) {
  std::string field;
  if (auto problem = record_problem(rec, field)) throw Error(field + ": " + *problem);
}

DatasetFormat format_from_path(const std::filesystem::path& path) {
  return lowercase(path.extension().string()) == ".csv" ? DatasetFormat::csv
                                                        : DatasetFormat::jsonl;
}

std::vector<ExampleRecord> read_dataset(std::istream& in, DatasetFormat format) {
  if (format == DatasetFormat::csv) return read_csv_dataset(in);
  std::vector<ExampleRecord> records;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(row, "", e.what());
    }
    records.push_back(record_from_json(j, row));
    ++row;
  }
  return records;
}

std::vector<ExampleRecord> load_dataset(const std::filesystem::path& path, DatasetFormat format) {
  auto in = open_input(path);
  return read_dataset(in, format);
}

std::vector<ExampleRecord> load_dataset(const std::filesystem::path& path) {
  return load_dataset(path, format_from_path(path));
}

void write_dataset(std::ostream& out, const std::vector<ExampleRecord>& records,
                   DatasetFormat format) {
  if (format == DatasetFormat::jsonl) {
    for (const auto& rec : records) out << record_to_json(rec).dump() << '\n';
    return;
  }
  csv::write_row(out, csv::Row(kCsvColumns.begin(), kCsvColumns.end()));
  for (const auto& rec : records) {
    std::string choices;
    for (std::size_t i = 0; i < rec.choices.size(); ++i) {
      if (rec.choices[i].find('|') != std::string::npos)
        throw Error("choice containing '|' cannot be written as CSV: " + rec.choices[i]);
      if (i) choices += '|';
      choices += rec.choices[i];
    }
    csv::write_row(out, {rec.id, rec.sentence,
                         rec.expression ? std::to_string(rec.expression->begin) + ":" +
                                              std::to_string(rec.expression->end)
                                        : std::string(),
                         std::string(task_name(rec.task)), rec.instruction.value_or(""), rec.gold,
                         choices});
  }
}

void save_dataset(const std::filesystem::path& path, const std::vector<ExampleRecord>& records,
                  DatasetFormat format) {
  auto out = open_output(path);
  write_dataset(out, records, format);
}

Prompt build_prompt(const ExampleRecord& rec) {
  if (rec.sentence.empty()) throw Error("record '" + rec.id + "': empty sentence");
  check_record(rec);

  if (rec.task == TaskKind::multiple_choice) {
    Prompt prompt;
    prompt.text = std::string(kChoiceHeader) + "\nContext: ";
    prompt.sentence = {prompt.text.size(), prompt.text.size() + rec.sentence.size()};
    prompt.text += rec.sentence;
    if (rec.instruction) prompt.text += "\nQuestion: " + *rec.instruction;
    prompt.text += "\n";
    prompt.text += kChoiceOptions;
    for (std::size_t i = 0; i < rec.choices.size(); ++i) {
      prompt.text += '\n';
      prompt.text += static_cast<char>('A' + i);
      prompt.text += ". " + rec.choices[i];
    }
    if (rec.expression) prompt.expression = rec.expression->shifted(prompt.sentence.begin);
    return prompt;
  }

  if (!rec.expression)
    throw Error("record '" + rec.id + "': task '" + std::string(task_name(rec.task)) +
                "' requires an expression span");
  std::string_view tmpl = rec.task == TaskKind::idiom      ? kIdiomTemplate
                          : rec.task == TaskKind::metaphor ? kMetaphorTemplate
                                                           : kMetonymyTemplate;
  if (rec.instruction) tmpl = *rec.instruction;
  Prompt prompt = fill_template(tmpl, rec, span_text(rec));
  prompt.expression = rec.expression->shifted(prompt.sentence.begin);
  return prompt;
}

std::optional<std::string> parse_prediction(std::string_view raw_output,
                                            const ExampleRecord& rec) {
  const auto marker = after_last_marker(raw_output);
  if (rec.task != TaskKind::multiple_choice) {
    if (!marker) return std::nullopt;
    const std::string token = first_alnum_token(raw_output.substr(*marker));
    if (token.empty()) return std::nullopt;
    const auto alphabet = label_alphabet(rec);
    if (std::find(alphabet.begin(), alphabet.end(), token) != alphabet.end()) return token;
    return label_from_word(token, rec.task);
  }

  const std::string_view answer = marker ? raw_output.substr(*marker) : raw_output;
  const std::string normalized = normalize_answer(answer);
  std::string_view rest = answer;
  rest.remove_prefix(std::min(rest.size(), rest.find_first_not_of(" \t\r\n")));
  const std::string first_line = normalize_answer(rest.substr(0, rest.find('\n')));
  for (const auto& candidate : {normalized, first_line}) {
    for (const auto& choice : rec.choices) {
      if (!candidate.empty() && candidate == normalize_answer(choice)) return choice;
    }
  }
  const std::string token = first_alnum_token(answer);
  if (token.size() == 1 && token[0] >= 'a' &&
      static_cast<std::size_t>(token[0] - 'a') < rec.choices.size()) {
    return rec.choices[static_cast<std::size_t>(token[0] - 'a')];
  }
  return std::nullopt;
}

std::vector<RawPrediction> load_predictions(const std::filesystem::path& path) {
  std::vector<RawPrediction> preds;
  for_each_json_line(path, [&](const json& j, std::size_t row) {
    if (!j.contains("example_id") || !j["example_id"].is_string())
      throw ParseError(row, "example_id", "missing or not a string");
    if (!j.contains("raw_output") || !j["raw_output"].is_string())
      throw ParseError(row, "raw_output", "missing or not a string");
    preds.push_back({j["example_id"].get<std::string>(), j["raw_output"].get<std::string>()});
  });
  return preds;
}

void save_predictions(const std::filesystem::path& path,
                      const std::vector<RawPrediction>& preds) {
  auto out = open_output(path);
  for (const auto& p : preds) {
    out << json{{"example_id", p.example_id}, {"raw_output", p.raw_output}}.dump() << '\n';
  }
}

Labeling label_errors(const std::vector<ExampleRecord>& records,
                      const std::vector<RawPrediction>& predictions, UnparseablePolicy policy) {
  std::unordered_map<std::string_view, const RawPrediction*> by_id;
  for (const auto& p : predictions) {
    if (!by_id.emplace(p.example_id, &p).second)
      throw Error("duplicate prediction for example '" + p.example_id + "'");
  }
  std::unordered_set<std::string_view> record_ids;
  for (const auto& rec : records) record_ids.insert(rec.id);
  for (const auto& p : predictions) {
    if (!record_ids.contains(p.example_id))
      throw Error("prediction for unknown example '" + p.example_id + "'");
  }

  Labeling result;
  std::size_t correct = 0;
  for (const auto& rec : records) {
    auto it = by_id.find(rec.id);
    if (it == by_id.end()) throw Error("no prediction for example '" + rec.id + "'");
    const auto parsed = parse_prediction(it->second->raw_output, rec);
    if (!parsed && policy == UnparseablePolicy::drop) {
      ++result.dropped;
      continue;
    }
    ErrorLabel label{rec.id, parsed.value_or(std::string(kUnparseable)), true};
    if (parsed) {
      const bool match = rec.task == TaskKind::multiple_choice
                             ? *parsed == rec.gold
                             : *parsed == lowercase(rec.gold);
      label.error = !match;
    }
    if (!label.error) ++correct;
    result.labels.push_back(std::move(label));
  }
  if (result.labels.empty()) throw Error("no scorable predictions");
  result.accuracy = static_cast<double>(correct) / static_cast<double>(result.labels.size());
  return result;
}

std::vector<ErrorLabel> load_error_labels(const std::filesystem::path& path) {
  std::vector<ErrorLabel> labels;
  for_each_json_line(path, [&](const json& j, std::size_t row) {
    if (!j.contains("example_id") || !j["example_id"].is_string())
      throw ParseError(row, "example_id", "missing or not a string");
    if (!j.contains("e") || !j["e"].is_number_integer())
      throw ParseError(row, "e", "missing or not 0/1");
    const auto e = j["e"].get<int>();
    if (e != 0 && e != 1) throw ParseError(row, "e", "expected 0 or 1");
    labels.push_back({j["example_id"].get<std::string>(), j.value("predicted", std::string()),
                      e == 1});
  });
  return labels;
}

void save_error_labels(const std::filesystem::path& path, const std::vector<ErrorLabel>& labels) {
  auto out = open_output(path);
  for (const auto& l : labels) {
    out << json{{"example_id", l.example_id}, {"predicted", l.predicted}, {"e", l.error ? 1 : 0}}
               .dump()
        << '\n';
  }
}

}  // namespace inlik
