#include "holmes/kb.hpp"

#include "holmes/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace holmes::kb {

using nlohmann::json;

namespace {

std::size_t line_of(std::string_view text, std::size_t byte) {
    byte = std::min(byte, text.size());
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + byte, '\n'));
}

const json& field(const json& obj, const char* key, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ParseError("kb: missing field '" + std::string(key) + "' at " + where);
    return *it;
}

std::string as_string(const json& v, const std::string& where) {
    if (!v.is_string()) throw ParseError("kb: expected string at " + where);
    return v.get<std::string>();
}

std::vector<std::string> as_strings(const json& v, const std::string& where) {
    if (!v.is_array()) throw ParseError("kb: expected array at " + where);
    std::vector<std::string> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out.push_back(as_string(v[i], where + "[" + std::to_string(i) + "]"));
    }
    return out;
}

// Three-colour DFS over an adjacency map; returns a cycle description or "".
std::string find_cycle(const std::map<std::string, std::vector<std::string>>& edges) {
    std::map<std::string, int> state;
    std::vector<std::string> stack;
    std::string found;
    std::function<bool(const std::string&)> visit = [&](const std::string& node) {
        state[node] = 1;
        stack.push_back(node);
        if (auto it = edges.find(node); it != edges.end()) {
            for (const auto& next : it->second) {
                int s = state[next];
                if (s == 1) {
                    auto from = std::find(stack.begin(), stack.end(), next);
                    for (auto p = from; p != stack.end(); ++p) found += *p + " -> ";
                    found += next;
                    return true;
                }
                if (s == 0 && visit(next)) return true;
            }
        }
        stack.pop_back();
        state[node] = 2;
        return false;
    };
    for (const auto& [node, _] : edges) {
        if (state[node] == 0 && visit(node)) return found;
    }
    return {};
}

void validate(const std::vector<Concept>& concepts) {
    std::set<std::string> ids;
    for (const auto& c : concepts) {
        if (c.id.empty()) throw ValidationError("kb: empty concept id");
        if (!ids.insert(c.id).second) throw ValidationError("kb: duplicate concept id '" + c.id + "'");
    }

    std::map<std::string, std::vector<std::string>> hyper_edges;
    for (const auto& c : concepts) hyper_edges[c.id] = c.hypernyms;
    if (auto cycle = find_cycle(hyper_edges); !cycle.empty()) {
        throw ValidationError("kb: hypernym cycle " + cycle);
    }

    for (const auto& c : concepts) {
        std::set<std::string> names;
        for (const auto& p : c.parts) {
            if (p.name.empty()) throw ValidationError("kb: empty part name in concept '" + c.id + "'");
            if (!names.insert(p.name).second) {
                throw ValidationError("kb: duplicate part '" + p.name + "' in concept '" + c.id + "'");
            }
        }
        std::map<std::string, std::vector<std::string>> within_edges;
        for (const auto& p : c.parts) {
            for (const auto& w : p.within) {
                if (!names.count(w)) {
                    throw ValidationError("kb: part '" + p.name + "' of '" + c.id + "' declares within '" + w +
                                          "' which is not a part of that concept");
                }
            }
            within_edges[p.name] = p.within;
        }
        if (auto cycle = find_cycle(within_edges); !cycle.empty()) {
            throw ValidationError("kb: containment cycle in '" + c.id + "': " + cycle);
        }
    }
}

}  // namespace

HolMeMap::HolMeMap(std::vector<Concept> concepts) : concepts_(std::move(concepts)) {
    validate(concepts_);
    for (std::size_t i = 0; i < concepts_.size(); ++i) index_.emplace(concepts_[i].id, i);
}

const Concept* HolMeMap::find(std::string_view id) const {
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &concepts_[it->second];
}

HolMeMap load_kb(std::string_view document) {
    json doc;
    try {
        doc = json::parse(document.begin(), document.end());
    } catch (const json::parse_error& e) {
        std::ostringstream msg;
        msg << "kb: malformed JSON at line " << line_of(document, e.byte) << ": " << e.what();
        throw ParseError(msg.str());
    }
    if (!doc.is_object()) throw ParseError("kb: document root must be an object");
    const json& list = field(doc, "concepts", "root");
    if (!list.is_array()) throw ParseError("kb: 'concepts' must be an array");

    std::vector<Concept> concepts;
    concepts.reserve(list.size());
    for (std::size_t i = 0; i < list.size(); ++i) {
        const std::string where = "concepts[" + std::to_string(i) + "]";
        const json& item = list[i];
        if (!item.is_object()) throw ParseError("kb: expected object at " + where);
        Concept c;
        c.id = as_string(field(item, "id", where), where + ".id");
        if (auto it = item.find("hypernyms"); it != item.end()) {
            c.hypernyms = as_strings(*it, where + ".hypernyms");
        }
        if (auto it = item.find("parts"); it != item.end()) {
            if (!it->is_array()) throw ParseError("kb: expected array at " + where + ".parts");
            for (std::size_t j = 0; j < it->size(); ++j) {
                const std::string pw = where + ".parts[" + std::to_string(j) + "]";
                const json& pj = (*it)[j];
                if (!pj.is_object()) throw ParseError("kb: expected object at " + pw);
                PartEntry p;
                p.name = as_string(field(pj, "name", pw), pw + ".name");
                if (auto v = pj.find("visible"); v != pj.end()) {
                    if (!v->is_boolean()) throw ParseError("kb: expected bool at " + pw + ".visible");
                    p.visible = v->get<bool>();
                }
                if (auto w = pj.find("within"); w != pj.end()) p.within = as_strings(*w, pw + ".within");
                c.parts.push_back(std::move(p));
            }
        }
        concepts.push_back(std::move(c));
    }
    return HolMeMap(std::move(concepts));
}

HolMeMap load_kb_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("kb: cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return load_kb(ss.str());
}

std::string serialize_kb(const HolMeMap& kb) {
    json list = json::array();
    for (const auto& c : kb.concepts()) {
        json parts = json::array();
        for (const auto& p : c.parts) {
            parts.push_back({{"name", p.name}, {"visible", p.visible}, {"within", p.within}});
        }
        list.push_back({{"id", c.id}, {"hypernyms", c.hypernyms}, {"parts", parts}});
    }
    return json{{"concepts", list}}.dump(2) + "\n";
}

std::vector<std::string> filter_hyper_meronyms(const std::vector<PartEntry>& parts) {
    // Containment only counts against parts that survive the visibility filter.
    std::set<std::string> visible;
    for (const auto& p : parts) {
        if (p.visible) visible.insert(p.name);
    }
    std::vector<std::string> out;
    for (const auto& p : parts) {
        if (!p.visible) continue;
        bool contained = std::any_of(p.within.begin(), p.within.end(),
                                     [&](const std::string& w) { return w != p.name && visible.count(w); });
        if (!contained) out.push_back(p.name);
    }
    return out;
}

std::vector<std::string> resolve_parts(std::string_view concept_id, const HolMeMap& kb) {
    const Concept* c = kb.find(concept_id);
    if (c == nullptr) throw ResolutionError("kb: unknown concept '" + std::string(concept_id) + "'");
    if (auto own = filter_hyper_meronyms(c->parts); !own.empty()) return own;

    std::string chain(concept_id);
    for (const auto& h : c->hypernyms) {
        chain += " -> " + h;
        const Concept* anc = kb.find(h);
        if (anc == nullptr) continue;
        if (auto parts = filter_hyper_meronyms(anc->parts); !parts.empty()) return parts;
    }
    throw ResolutionError("kb: no concept with visible parts along chain " + chain);
}

std::string bundled_kb_path(std::string_view name_or_path) {
    std::string file;
    if (name_or_path == "pascal" || name_or_path == "pascal_part") {
        file = "pascal_part.kb.json";
    } else if (name_or_path == "imagenet" || name_or_path == "imagenet_visa") {
        file = "imagenet_visa.kb.json";
    } else {
        return std::string(name_or_path);
    }
    std::filesystem::path dir = HOLMES_DATA_DIR;
    if (const char* env = std::getenv("HOLMES_DATA_DIR"); env != nullptr && *env != '\0') dir = env;
    return (dir / "kb" / file).string();
}

}  // namespace holmes::kb
