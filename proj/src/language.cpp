#include "uavvln/language.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <map>

#include "uavvln/format.hpp"
#include "uavvln/rng.hpp"

namespace uavvln::language {

std::string_view to_string(RelationKind k) {
    switch (k) {
    case RelationKind::near: return "near";
    case RelationKind::left_of: return "left_of";
    case RelationKind::right_of: return "right_of";
    case RelationKind::behind: return "behind";
    case RelationKind::in_front_of: return "in_front_of";
    }
    return "near";
}

namespace {

RelationKind relation_from_string(std::string_view s) {
    for (auto k : {RelationKind::near, RelationKind::left_of, RelationKind::right_of,
                   RelationKind::behind, RelationKind::in_front_of})
        if (to_string(k) == s) return k;
    throw SchemaViolation("unknown relation kind '" + std::string(s) + "'");
}

std::string_view relation_phrase(RelationKind k) {
    switch (k) {
    case RelationKind::near: return "near";
    case RelationKind::left_of: return "left of";
    case RelationKind::right_of: return "right of";
    case RelationKind::behind: return "behind";
    case RelationKind::in_front_of: return "in front of";
    }
    return "near";
}

std::string noun_string(const std::string& label, const std::set<std::string>& attributes) {
    std::string out;
    for (const auto& a : attributes) out += a + " ";
    return out + label;
}

} // namespace

std::string to_string(const ObjectRef& ref) {
    std::string out = noun_string(ref.label, ref.attributes);
    if (ref.relation) {
        out += " ";
        out += relation_phrase(ref.relation->kind);
        out += " " + noun_string(ref.relation->anchor.label, ref.relation->anchor.attributes);
    }
    return out;
}

std::string_view to_string(SubGoalKind k) {
    switch (k) {
    case SubGoalKind::takeoff: return "TAKEOFF";
    case SubGoalKind::navigate_to: return "NAVIGATE_TO";
    case SubGoalKind::fly_over: return "FLY_OVER";
    case SubGoalKind::ascend_to: return "ASCEND_TO";
    case SubGoalKind::descend_to: return "DESCEND_TO";
    case SubGoalKind::search: return "SEARCH";
    case SubGoalKind::hover: return "HOVER";
    case SubGoalKind::land: return "LAND";
    case SubGoalKind::land_at: return "LAND_AT";
    }
    return "HOVER";
}

SubGoalKind subgoal_kind_from_string(std::string_view s) {
    for (auto k : kAllSubGoalKinds)
        if (to_string(k) == s) return k;
    throw SchemaViolation("unknown sub-goal kind '" + std::string(s) + "'");
}

bool takes_target(SubGoalKind k) {
    return k == SubGoalKind::navigate_to || k == SubGoalKind::fly_over || k == SubGoalKind::search ||
           k == SubGoalKind::land_at;
}

bool takes_scalar(SubGoalKind k) {
    return k == SubGoalKind::takeoff || k == SubGoalKind::ascend_to || k == SubGoalKind::descend_to ||
           k == SubGoalKind::hover;
}

bool is_landing(SubGoalKind k) { return k == SubGoalKind::land || k == SubGoalKind::land_at; }

bool requires_airborne(SubGoalKind k) { return k != SubGoalKind::takeoff && k != SubGoalKind::land; }

std::vector<ActionKind> required_actions(SubGoalKind k) {
    using A = ActionKind;
    switch (k) {
    case SubGoalKind::takeoff: return {A::takeoff};
    case SubGoalKind::navigate_to:
    case SubGoalKind::search: return {A::move_forward, A::turn_left, A::turn_right};
    case SubGoalKind::fly_over: return {A::move_forward, A::turn_left, A::turn_right, A::ascend};
    case SubGoalKind::ascend_to: return {A::ascend};
    case SubGoalKind::descend_to: return {A::descend};
    case SubGoalKind::hover: return {A::hover};
    case SubGoalKind::land: return {A::land};
    case SubGoalKind::land_at: return {A::move_forward, A::turn_left, A::turn_right, A::land};
    }
    return {};
}

std::string to_string(const SubGoal& g) {
    std::string out(to_string(g.kind));
    if (g.target) return out + "(" + to_string(*g.target) + ")";
    if (takes_scalar(g.kind)) return out + "(" + format_number(g.value) + ")";
    return out;
}

std::string to_string(const SubGoalPlan& plan) {
    std::string out;
    for (std::size_t i = 0; i < plan.subgoals.size(); ++i) {
        if (i) out += " ; ";
        out += to_string(plan.subgoals[i]);
    }
    return out;
}

std::vector<std::string> plan_violations(const SubGoalPlan& plan, bool starts_landed) {
    std::vector<std::string> v;
    const auto& gs = plan.subgoals;
    if (gs.empty()) v.push_back("plan is empty");
    int landings = 0;
    bool airborne = !starts_landed;
    for (std::size_t i = 0; i < gs.size(); ++i) {
        const auto& g = gs[i];
        const std::string at = "sub-goal " + std::to_string(i) + " (" + std::string(to_string(g.kind)) + ")";
        if (takes_scalar(g.kind) && !(std::isfinite(g.value) && g.value > 0.0))
            v.push_back(at + ": parameter must be positive");
        if (takes_target(g.kind) != g.target.has_value())
            v.push_back(at + (g.target ? ": unexpected target" : ": missing target"));
        if (g.target) {
            if (g.target->label.empty()) v.push_back(at + ": empty target label");
            if (g.target->relation && g.target->relation->anchor.label.empty())
                v.push_back(at + ": empty anchor label");
        }
        if (is_landing(g.kind)) {
            ++landings;
            if (i + 1 != gs.size()) v.push_back(at + ": landing is not the last sub-goal");
        }
        if (g.kind == SubGoalKind::takeoff) airborne = true;
        else if (requires_airborne(g.kind) && !airborne) {
            v.push_back(at + ": not preceded by TAKEOFF");
            airborne = true;
        }
    }
    if (landings > 1) v.push_back("more than one landing sub-goal");
    return v;
}

std::vector<SubGoal> repair_subgoals(std::vector<SubGoal> subgoals, bool starts_landed) {
    std::vector<SubGoal> kept;
    for (std::size_t i = 0; i < subgoals.size(); ++i) {
        if (is_landing(subgoals[i].kind) && i + 1 != subgoals.size()) continue;
        kept.push_back(std::move(subgoals[i]));
    }
    if (starts_landed) {
        for (const auto& g : kept) {
            if (g.kind == SubGoalKind::takeoff) break;
            if (requires_airborne(g.kind)) {
                kept.insert(kept.begin(), SubGoal::takeoff());
                break;
            }
        }
    }
    return kept;
}

std::vector<ActionKind> full_action_space() {
    return {std::begin(world::kAllActionKinds), std::end(world::kAllActionKinds)};
}

namespace {

void check_action_space(const SubGoalPlan& plan, std::span<const ActionKind> action_space, bool remote) {
    for (const auto& g : plan.subgoals) {
        for (ActionKind needed : required_actions(g.kind)) {
            if (std::find(action_space.begin(), action_space.end(), needed) == action_space.end()) {
                const std::string msg = std::string(to_string(g.kind)) + " needs action " +
                                        std::string(world::to_string(needed)) +
                                        " which is not in the action space";
                if (remote) throw InvariantViolation(msg);
                throw UnknownAction(msg);
            }
        }
    }
}

// ---- reference grammar ----------------------------------------------------

using Tokens = std::vector<std::string>;

enum class Verb { takeoff, navigate, fly_over, search, hover, climb, descend, land, land_at };

struct VerbForm {
    Tokens words;
    Verb verb;
};

const std::vector<VerbForm>& verb_forms() {
    static const std::vector<VerbForm> forms = [] {
        std::vector<VerbForm> f = {
            {{"take", "off"}, Verb::takeoff},        {{"takeoff"}, Verb::takeoff},
            {{"lift", "off"}, Verb::takeoff},        {{"launch"}, Verb::takeoff},
            {{"fly", "to"}, Verb::navigate},         {{"go", "to"}, Verb::navigate},
            {{"navigate", "to"}, Verb::navigate},    {{"move", "to"}, Verb::navigate},
            {{"head", "to"}, Verb::navigate},        {{"travel", "to"}, Verb::navigate},
            {{"proceed", "to"}, Verb::navigate},     {{"fly", "towards"}, Verb::navigate},
            {{"go", "towards"}, Verb::navigate},     {{"approach"}, Verb::navigate},
            {{"fly", "over"}, Verb::fly_over},       {{"fly", "above"}, Verb::fly_over},
            {{"pass", "over"}, Verb::fly_over},      {{"hover", "over"}, Verb::fly_over},
            {{"search", "for"}, Verb::search},       {{"look", "for"}, Verb::search},
            {{"scan", "for"}, Verb::search},         {{"find"}, Verb::search},
            {{"locate"}, Verb::search},              {{"hover"}, Verb::hover},
            {{"wait"}, Verb::hover},                 {{"hold", "position"}, Verb::hover},
            {{"climb", "to"}, Verb::climb},          {{"ascend", "to"}, Verb::climb},
            {{"rise", "to"}, Verb::climb},           {{"go", "up", "to"}, Verb::climb},
            {{"fly", "up", "to"}, Verb::climb},      {{"descend", "to"}, Verb::descend},
            {{"go", "down", "to"}, Verb::descend},   {{"drop", "to"}, Verb::descend},
            {{"fly", "down", "to"}, Verb::descend},  {{"land", "on"}, Verb::land_at},
            {{"land", "at"}, Verb::land_at},         {{"land", "beside"}, Verb::land_at},
            {{"touch", "down", "on"}, Verb::land_at}, {{"land"}, Verb::land},
            {{"touch", "down"}, Verb::land},
        };
        std::stable_sort(f.begin(), f.end(),
                         [](const VerbForm& a, const VerbForm& b) { return a.words.size() > b.words.size(); });
        return f;
    }();
    return forms;
}

struct RelationForm {
    Tokens words;
    RelationKind kind;
};

const std::vector<RelationForm>& relation_forms() {
    static const std::vector<RelationForm> forms = [] {
        std::vector<RelationForm> f = {
            {{"to", "the", "left", "of"}, RelationKind::left_of},
            {{"to", "the", "right", "of"}, RelationKind::right_of},
            {{"left", "of"}, RelationKind::left_of},
            {{"right", "of"}, RelationKind::right_of},
            {{"in", "front", "of"}, RelationKind::in_front_of},
            {{"behind"}, RelationKind::behind},
            {{"near"}, RelationKind::near},
            {{"next", "to"}, RelationKind::near},
            {{"close", "to"}, RelationKind::near},
            {{"beside"}, RelationKind::near},
        };
        std::stable_sort(f.begin(), f.end(), [](const RelationForm& a, const RelationForm& b) {
            return a.words.size() > b.words.size();
        });
        return f;
    }();
    return forms;
}

const std::map<std::string, std::string>& attribute_words() {
    static const std::map<std::string, std::string> words = {
        {"red", "red"},       {"blue", "blue"},     {"green", "green"},   {"yellow", "yellow"},
        {"white", "white"},   {"black", "black"},   {"orange", "orange"}, {"gray", "gray"},
        {"grey", "gray"},     {"brown", "brown"},   {"purple", "purple"}, {"pink", "pink"},
        {"silver", "silver"}, {"large", "large"},   {"big", "large"},     {"small", "small"},
        {"little", "small"},  {"tall", "tall"},     {"short", "short"},   {"wooden", "wooden"},
        {"metal", "metal"},
    };
    return words;
}

const std::map<std::string, std::string>& label_synonyms() {
    static const std::map<std::string, std::string> words = {
        {"automobile", "car"}, {"vehicle", "car"}, {"bike", "bicycle"}, {"sofa", "couch"},
        {"trashcan", "bin"},   {"dumpster", "bin"}, {"helipad", "pad"}, {"crate", "box"},
    };
    return words;
}

bool is_determiner(const std::string& w) {
    return w == "the" || w == "a" || w == "an" || w == "that" || w == "this";
}

bool is_filler(const std::string& w) {
    return w == "please" || w == "first" || w == "next" || w == "finally" || w == "now" || w == "and";
}

std::string join(const Tokens& t, std::size_t from = 0, std::size_t to = std::string::npos) {
    std::string out;
    to = std::min(to, t.size());
    for (std::size_t i = from; i < to; ++i) {
        if (i > from) out += ' ';
        out += t[i];
    }
    return out;
}

bool matches_at(const Tokens& t, std::size_t pos, const Tokens& words) {
    if (pos + words.size() > t.size()) return false;
    return std::equal(words.begin(), words.end(), t.begin() + static_cast<std::ptrdiff_t>(pos));
}

Tokens tokenize(std::string_view text) {
    std::string norm;
    norm.reserve(text.size() * 2);
    for (std::size_t i = 0; i < text.size(); ++i) {
        const unsigned char c = static_cast<unsigned char>(text[i]);
        const bool digit_before = i > 0 && std::isdigit(static_cast<unsigned char>(text[i - 1]));
        const bool digit_after = i + 1 < text.size() && std::isdigit(static_cast<unsigned char>(text[i + 1]));
        if (std::isalnum(c) || c == '-' || c == '\'') norm += static_cast<char>(std::tolower(c));
        else if (c == '.' && digit_before && digit_after) norm += '.';
        else if (c == ',' || c == ';' || c == '.' || c == '!' || c == '?') norm += " , ";
        else norm += ' ';
    }
    Tokens out;
    std::size_t i = 0;
    while (i < norm.size()) {
        while (i < norm.size() && norm[i] == ' ') ++i;
        const std::size_t j = norm.find(' ', i);
        const std::size_t end = j == std::string::npos ? norm.size() : j;
        if (end > i) out.push_back(norm.substr(i, end - i));
        i = end;
    }
    return out;
}

std::vector<Tokens> split_clauses(const Tokens& tokens) {
    std::vector<Tokens> clauses(1);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const auto& w = tokens[i];
        const bool connective = w == "," || w == "then" || w == "and";
        if (matches_at(tokens, i, {"after", "that"})) {
            ++i;
            clauses.emplace_back();
        } else if (connective) {
            clauses.emplace_back();
        } else {
            clauses.back().push_back(w);
        }
    }
    std::vector<Tokens> out;
    for (auto& c : clauses) {
        std::size_t skip = 0;
        while (skip < c.size() && is_filler(c[skip])) ++skip;
        c.erase(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(skip));
        if (!c.empty()) out.push_back(std::move(c));
    }
    return out;
}

std::optional<double> parse_number(std::string w) {
    static const std::map<std::string, double> words = {
        {"one", 1},  {"two", 2},   {"three", 3}, {"four", 4}, {"five", 5},
        {"six", 6},  {"seven", 7}, {"eight", 8}, {"nine", 9}, {"ten", 10},
    };
    if (auto it = words.find(w); it != words.end()) return it->second;
    if (w.size() > 1 && (w.back() == 'm' || w.back() == 's')) w.pop_back();
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
    if (ec != std::errc{} || ptr != w.data() + w.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

bool is_meter_unit(const std::string& w) {
    return w == "m" || w == "meter" || w == "meters" || w == "metre" || w == "metres";
}

bool is_second_unit(const std::string& w) {
    return w == "s" || w == "sec" || w == "secs" || w == "second" || w == "seconds";
}

// NUM [unit], nothing else.
std::optional<double> parse_quantity(const Tokens& rest, bool (*unit)(const std::string&)) {
    if (rest.empty() || rest.size() > 2) return std::nullopt;
    auto v = parse_number(rest[0]);
    if (!v || *v <= 0.0) return std::nullopt;
    if (rest.size() == 2 && !unit(rest[1])) return std::nullopt;
    return v;
}

std::optional<Noun> parse_noun(Tokens t) {
    std::size_t skip = 0;
    while (skip < t.size() && is_determiner(t[skip])) ++skip;
    t.erase(t.begin(), t.begin() + static_cast<std::ptrdiff_t>(skip));
    if (t.empty()) return std::nullopt;
    Noun n;
    std::size_t i = 0;
    const auto& attrs = attribute_words();
    while (i + 1 < t.size()) {
        auto it = attrs.find(t[i]);
        if (it == attrs.end()) break;
        n.attributes.insert(it->second);
        ++i;
    }
    Tokens label(t.begin() + static_cast<std::ptrdiff_t>(i), t.end());
    for (const auto& w : label) {
        if (is_determiner(w) || parse_number(w)) return std::nullopt;
    }
    if (label.size() == 1) {
        if (auto it = label_synonyms().find(label[0]); it != label_synonyms().end()) label[0] = it->second;
    }
    n.label = join(label);
    return n;
}

std::optional<ObjectRef> parse_object_ref(const Tokens& t) {
    for (std::size_t pos = 1; pos < t.size(); ++pos) {
        for (const auto& form : relation_forms()) {
            if (!matches_at(t, pos, form.words)) continue;
            auto head = parse_noun(Tokens(t.begin(), t.begin() + static_cast<std::ptrdiff_t>(pos)));
            Tokens anchor_tokens(t.begin() + static_cast<std::ptrdiff_t>(pos + form.words.size()), t.end());
            for (std::size_t k = 0; k < anchor_tokens.size(); ++k)
                for (const auto& inner : relation_forms())
                    if (matches_at(anchor_tokens, k, inner.words)) return std::nullopt;
            auto anchor = parse_noun(anchor_tokens);
            if (!head || !anchor) return std::nullopt;
            return ObjectRef{head->label, head->attributes, Relation{form.kind, *anchor}};
        }
    }
    auto noun = parse_noun(t);
    if (!noun) return std::nullopt;
    return ObjectRef{noun->label, noun->attributes, std::nullopt};
}

SubGoal parse_clause(const Tokens& clause, const ParserOptions& options) {
    const std::string text = join(clause);
    for (const auto& form : verb_forms()) {
        if (!matches_at(clause, 0, form.words)) continue;
        const Tokens rest(clause.begin() + static_cast<std::ptrdiff_t>(form.words.size()), clause.end());
        switch (form.verb) {
        case Verb::takeoff: {
            if (rest.empty()) return SubGoal::takeoff(options.takeoff_altitude);
            Tokens q = rest;
            if (q.front() == "to") q.erase(q.begin());
            if (auto alt = parse_quantity(q, is_meter_unit)) return SubGoal::takeoff(*alt);
            throw UnparsableClause(text);
        }
        case Verb::hover: {
            if (rest.empty() || (rest.size() == 2 && rest[0] == "in" && rest[1] == "place"))
                return SubGoal::hover(options.hover_seconds);
            if (rest.front() == "for") {
                if (auto s = parse_quantity(Tokens(rest.begin() + 1, rest.end()), is_second_unit))
                    return SubGoal::hover(*s);
            }
            throw UnparsableClause(text);
        }
        case Verb::climb:
        case Verb::descend: {
            if (auto alt = parse_quantity(rest, is_meter_unit))
                return SubGoal::with_value(form.verb == Verb::climb ? SubGoalKind::ascend_to
                                                                    : SubGoalKind::descend_to,
                                           *alt);
            throw UnparsableClause(text);
        }
        case Verb::land:
            if (!rest.empty()) throw UnparsableClause(text);
            return SubGoal::land();
        case Verb::navigate:
        case Verb::fly_over:
        case Verb::search:
        case Verb::land_at: {
            auto ref = parse_object_ref(rest);
            if (!ref) throw UnparsableClause(text);
            const SubGoalKind kind = form.verb == Verb::navigate   ? SubGoalKind::navigate_to
                                     : form.verb == Verb::fly_over ? SubGoalKind::fly_over
                                     : form.verb == Verb::search   ? SubGoalKind::search
                                                                   : SubGoalKind::land_at;
            return SubGoal::with_target(kind, std::move(*ref));
        }
        }
    }
    throw UnparsableClause(text);
}

} // namespace

SubGoalPlan parse_instruction(const Instruction& instruction, std::span<const ActionKind> action_space,
                              const ParserOptions& options) {
    const auto clauses = split_clauses(tokenize(instruction.text));
    if (clauses.empty()) throw UnparsableClause(instruction.text);
    std::vector<SubGoal> goals;
    for (const auto& c : clauses) goals.push_back(parse_clause(c, options));

    SubGoalPlan plan;
    plan.source = PlanSource::reference_parser;
    plan.subgoals = repair_subgoals(std::move(goals), options.starts_landed);
    for (auto& g : plan.subgoals)
        if (g.kind == SubGoalKind::takeoff && g.value <= 0.0) g.value = options.takeoff_altitude;
    check_action_space(plan, action_space, false);
    return plan;
}

// ---- JSON -----------------------------------------------------------------

namespace {

void require_keys(const nlohmann::json& j, std::initializer_list<std::string_view> required,
                  std::initializer_list<std::string_view> optional, std::string_view what) {
    if (!j.is_object()) throw SchemaViolation(std::string(what) + " must be an object");
    for (auto key : required)
        if (!j.contains(key)) throw SchemaViolation(std::string(what) + " lacks field '" + std::string(key) + "'");
    for (const auto& [key, _] : j.items()) {
        const bool known = std::find(required.begin(), required.end(), key) != required.end() ||
                           std::find(optional.begin(), optional.end(), key) != optional.end();
        if (!known) throw SchemaViolation(std::string(what) + " has unknown field '" + key + "'");
    }
}

std::string get_string(const nlohmann::json& j, const char* key) {
    if (!j.at(key).is_string()) throw SchemaViolation(std::string("field '") + key + "' must be a string");
    return j.at(key).get<std::string>();
}

std::set<std::string> get_attributes(const nlohmann::json& j) {
    std::set<std::string> out;
    if (!j.contains("attributes")) return out;
    const auto& a = j.at("attributes");
    if (!a.is_array()) throw SchemaViolation("attributes must be an array");
    for (const auto& s : a) {
        if (!s.is_string()) throw SchemaViolation("attributes must be strings");
        out.insert(s.get<std::string>());
    }
    return out;
}

double get_positive(const nlohmann::json& j, const char* key) {
    const auto& v = j.at(key);
    if (!v.is_number()) throw SchemaViolation(std::string("field '") + key + "' must be a number");
    const double d = v.get<double>();
    if (!std::isfinite(d) || d <= 0.0) throw SchemaViolation(std::string("field '") + key + "' must be positive");
    return d;
}

nlohmann::json noun_json(const std::string& label, const std::set<std::string>& attributes) {
    return {{"label", label}, {"attributes", attributes}};
}

} // namespace

nlohmann::json to_json(const ObjectRef& ref) {
    auto j = noun_json(ref.label, ref.attributes);
    if (ref.relation)
        j["relation"] = {{"kind", to_string(ref.relation->kind)},
                         {"anchor", noun_json(ref.relation->anchor.label, ref.relation->anchor.attributes)}};
    return j;
}

ObjectRef object_ref_from_json(const nlohmann::json& j) {
    require_keys(j, {"label"}, {"attributes", "relation"}, "object reference");
    ObjectRef ref;
    ref.label = get_string(j, "label");
    ref.attributes = get_attributes(j);
    if (j.contains("relation")) {
        const auto& r = j.at("relation");
        require_keys(r, {"kind", "anchor"}, {}, "relation");
        const auto& a = r.at("anchor");
        require_keys(a, {"label"}, {"attributes"}, "relation anchor");
        ref.relation = Relation{relation_from_string(get_string(r, "kind")), {get_string(a, "label"), get_attributes(a)}};
    }
    if (ref.label.empty()) throw SchemaViolation("object label must be non-empty");
    return ref;
}

nlohmann::json to_json(const SubGoal& g) {
    nlohmann::json args = nlohmann::json::object();
    switch (g.kind) {
    case SubGoalKind::takeoff:
    case SubGoalKind::ascend_to:
    case SubGoalKind::descend_to: args["alt"] = g.value; break;
    case SubGoalKind::hover: args["seconds"] = g.value; break;
    case SubGoalKind::land: break;
    default:
        if (g.target) args["target"] = to_json(*g.target);
    }
    return {{"kind", to_string(g.kind)}, {"args", args}};
}

SubGoal subgoal_from_json(const nlohmann::json& j) {
    require_keys(j, {"kind", "args"}, {}, "sub-goal");
    SubGoal g;
    g.kind = subgoal_kind_from_string(get_string(j, "kind"));
    const auto& args = j.at("args");
    switch (g.kind) {
    case SubGoalKind::takeoff:
    case SubGoalKind::ascend_to:
    case SubGoalKind::descend_to:
        require_keys(args, {"alt"}, {}, "sub-goal args");
        g.value = get_positive(args, "alt");
        break;
    case SubGoalKind::hover:
        require_keys(args, {"seconds"}, {}, "sub-goal args");
        g.value = get_positive(args, "seconds");
        break;
    case SubGoalKind::land: require_keys(args, {}, {}, "sub-goal args"); break;
    default:
        require_keys(args, {"target"}, {}, "sub-goal args");
        g.target = object_ref_from_json(args.at("target"));
    }
    return g;
}

nlohmann::json to_json(const SubGoalPlan& plan) {
    nlohmann::json goals = nlohmann::json::array();
    for (const auto& g : plan.subgoals) goals.push_back(to_json(g));
    return {{"schema", "decompose/1"}, {"subgoals", goals}};
}

SubGoalPlan plan_from_json(const nlohmann::json& doc, PlanSource source) {
    try {
        require_keys(doc, {"schema", "subgoals"}, {}, "decompose response");
        if (doc.at("schema") != "decompose/1") throw SchemaViolation("schema must be \"decompose/1\"");
        if (!doc.at("subgoals").is_array()) throw SchemaViolation("subgoals must be an array");
        SubGoalPlan plan;
        plan.source = source;
        for (const auto& g : doc.at("subgoals")) plan.subgoals.push_back(subgoal_from_json(g));
        return plan;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaViolation(e.what());
    }
}

nlohmann::json decompose_request(const Instruction& instruction, std::span<const ActionKind> action_space,
                                 std::span<const std::string> scene_vocabulary) {
    nlohmann::json kinds = nlohmann::json::array();
    for (auto k : action_space) kinds.push_back(world::to_string(k));
    return {{"schema", "decompose/1"},
            {"instruction", instruction.text},
            {"action_space", kinds},
            {"scene_vocabulary", std::vector<std::string>(scene_vocabulary.begin(), scene_vocabulary.end())}};
}

SubGoalPlan remote_decompose(const Instruction& instruction, std::span<const ActionKind> action_space,
                             std::span<const std::string> scene_vocabulary, const remote::Endpoint& backend,
                             bool starts_landed) {
    const auto reply = remote::post_json(backend, decompose_request(instruction, action_space, scene_vocabulary));
    SubGoalPlan plan = plan_from_json(reply, PlanSource::external_llm);
    if (auto v = plan_violations(plan, starts_landed); !v.empty()) throw InvariantViolation(v.front());
    check_action_space(plan, action_space, true);
    return plan;
}

// ---- corruption -----------------------------------------------------------

namespace {

SubGoal default_for(SubGoalKind kind, const std::optional<ObjectRef>& keep, const std::string& fallback_label) {
    switch (kind) {
    case SubGoalKind::takeoff: return SubGoal::takeoff();
    case SubGoalKind::ascend_to: return SubGoal::with_value(kind, 3.0);
    case SubGoalKind::descend_to: return SubGoal::with_value(kind, 1.0);
    case SubGoalKind::hover: return SubGoal::hover();
    case SubGoalKind::land: return SubGoal::land();
    default: return SubGoal::with_target(kind, keep ? *keep : ObjectRef{fallback_label, {}, {}});
    }
}

} // namespace

Corruption corrupt_plan_detailed(const SubGoalPlan& plan, double rate, std::uint64_t seed,
                                 std::span<const std::string> vocabulary) {
    Corruption out;
    out.altered = plan.subgoals;
    out.mask.assign(plan.subgoals.size(), false);
    Rng rng(seed);
    const std::size_t n = plan.subgoals.size();
    for (std::size_t i = 0; i < n; ++i) {
        // Four draws per position whether or not it is altered, so the altered
        // set at a lower rate is a subset of the set at a higher rate.
        const double u_alter = rng.uniform();
        const double u_mode = rng.uniform();
        const double u_kind = rng.uniform();
        const double u_label = rng.uniform();
        if (u_alter >= rate) continue;
        out.mask[i] = true;

        const SubGoal& g = plan.subgoals[i];
        std::vector<std::string> other_labels;
        for (const auto& l : vocabulary)
            if (!g.target || l != g.target->label) other_labels.push_back(l);
        const std::string fallback = vocabulary.empty() ? std::string("object")
                                                        : vocabulary[static_cast<std::size_t>(
                                                              u_label * static_cast<double>(vocabulary.size()))];

        if (g.target && !other_labels.empty() && u_mode < 0.5) {
            SubGoal swapped = g;
            swapped.target->label =
                other_labels[static_cast<std::size_t>(u_label * static_cast<double>(other_labels.size()))];
            out.altered[i] = swapped;
            continue;
        }
        std::vector<SubGoalKind> candidates;
        for (auto k : kAllSubGoalKinds) {
            if (k == g.kind) continue;
            if (is_landing(k) && i + 1 != n) continue;
            candidates.push_back(k);
        }
        const auto kind = candidates[static_cast<std::size_t>(u_kind * static_cast<double>(candidates.size()))];
        out.altered[i] = default_for(kind, g.target, fallback);
    }
    out.plan.source = plan.source;
    out.plan.subgoals = repair_subgoals(out.altered, true);
    return out;
}

SubGoalPlan corrupt_plan(const SubGoalPlan& plan, double rate, std::uint64_t seed,
                         std::span<const std::string> vocabulary) {
    if (rate <= 0.0) return plan;
    return corrupt_plan_detailed(plan, rate, seed, vocabulary).plan;
}

} // namespace uavvln::language
