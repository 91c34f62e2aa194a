#pragma once

#include <cstdint>
#include <deque>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>

namespace proppr {

using Symbol = std::uint32_t;

// Process-wide string interner. Interning happens while inputs are loaded;
// concurrent grounders only look names up, guarded by the shared lock.
class SymbolTable {
public:
    Symbol intern(std::string_view text) {
        {
            std::shared_lock lock(mutex_);
            auto it = ids_.find(text);
            if (it != ids_.end()) return it->second;
        }
        std::unique_lock lock(mutex_);
        auto it = ids_.find(text);
        if (it != ids_.end()) return it->second;
        names_.emplace_back(text);
        Symbol id = static_cast<Symbol>(names_.size() - 1);
        ids_.emplace(std::string_view(names_.back()), id);
        return id;
    }

    // Returned reference stays valid: entries live in a deque and are never erased.
    const std::string& name(Symbol id) const {
        std::shared_lock lock(mutex_);
        return names_[id];
    }

    std::size_t size() const {
        std::shared_lock lock(mutex_);
        return names_.size();
    }

private:
    mutable std::shared_mutex mutex_;
    std::deque<std::string> names_;
    std::unordered_map<std::string_view, Symbol> ids_;
};

inline SymbolTable& symbols() {
    static SymbolTable table;
    return table;
}

inline Symbol intern(std::string_view text) { return symbols().intern(text); }
inline const std::string& symbol_name(Symbol id) { return symbols().name(id); }

} // namespace proppr
