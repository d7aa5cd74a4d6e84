#include "fdj/synthetic.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <stdexcept>

#include "fdj/distances.hpp"
#include "fdj/rng.hpp"

namespace fdj {

namespace {

const char* kFirstNames[] = {
    "Alice",  "Benjamin", "Clara",  "David", "Elena",  "Felix",  "Grace",
    "Henry",  "Iris",     "Jonas",  "Kara",  "Liam",   "Mona",   "Nathan",
    "Olive",  "Peter",    "Quinn",  "Rosa",  "Samuel", "Tessa",  "Ulrich",
    "Vera",   "Walter",   "Xenia",  "Yusuf", "Zara",   "Amos",   "Bianca",
    "Carl",   "Dora",     "Edwin",  "Flora", "Gideon", "Hanna",  "Ivan",
    "Julia",  "Kevin",    "Laura",  "Martin", "Nora"};

const char* kLastNames[] = {
    "Smith",    "Johnson",  "Brooks",    "Carter", "Dawson",  "Ellis",
    "Foster",   "Garner",   "Hayes",     "Ingram", "Jensen",  "Keller",
    "Lawson",   "Mercer",   "Norris",    "Osborne", "Parker", "Quigley",
    "Reyes",    "Sutton",   "Thorne",    "Underwood", "Vance", "Whitaker",
    "Young",    "Zimmer",   "Abbott",    "Barnes", "Colvin",  "Drake",
    "Everett",  "Fleming",  "Garza",     "Holden", "Irwin",   "Jacobs",
    "Kirby",    "Lowell",   "Monroe",    "Nash"};

const char* kMovieAdjectives[] = {
    "Dark",     "Silent",   "Golden",   "Lost",     "Hidden",  "Broken",
    "Crimson",  "Distant",  "Eternal",  "Fading",   "Gentle",  "Hollow",
    "Iron",     "Jade",     "Kind",     "Luminous", "Midnight", "Narrow",
    "Obsidian", "Pale",     "Quiet",    "Restless", "Savage",  "Tranquil",
    "Unseen",   "Velvet",   "Wandering", "Ancient", "Burning", "Frozen"};

const char* kMovieNouns[] = {
    "Forest",   "River",    "Mountain",  "Harbor",  "Mirror",  "Garden",
    "Tower",    "Valley",   "Ocean",     "Desert",  "Castle",  "Bridge",
    "Lantern",  "Meadow",   "Orchard",   "Palace",  "Quarry",  "Reef",
    "Summit",   "Tunnel",   "Vineyard",  "Waterfall", "Archive", "Beacon",
    "Canyon",   "Dungeon",  "Echo",      "Fortress", "Glacier", "Horizon"};

const char* kFillers[] = {
    "The evening had been uneventful until then.",
    "Nobody paid much attention to the weather report.",
    "A long queue formed outside the bakery that morning.",
    "The train arrived a few minutes behind schedule.",
    "Someone had left a newspaper on the bench.",
    "The streetlights flickered twice before settling.",
    "Fresh paint still covered half of the fence.",
    "A dog barked somewhere beyond the parking lot.",
    "The office smelled faintly of burnt coffee.",
    "Rain had been falling on and off since noon.",
    "The elevator was out of service again.",
    "Leaves kept gathering in the courtyard corners."};

const char* kSyllables[] = {"ba", "de", "fi", "go", "hu", "ki",
                            "lo", "mu", "ne", "po", "ru", "sa"};

std::string syllable_name(std::uint64_t counter) {
  std::string body;
  std::uint64_t c = counter;
  std::size_t digits = 0;
  do {
    body.insert(0, kSyllables[c % 12]);
    c /= 12;
    ++digits;
  } while (c > 0);
  while (digits < 4) {
    body.insert(0, kSyllables[0]);
    ++digits;
  }
  body[0] = static_cast<char>(
      std::toupper(static_cast<unsigned char>(body[0])));
  return body;
}

std::string join_names(const std::vector<std::string>& names) {
  std::string out;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i > 0) {
      out += (i + 1 == names.size()) ? " and " : ", ";
    }
    out += names[i];
  }
  return out;
}

}  // namespace

std::string synthetic_join_prompt() {
  return "Sentence A: {l}\nSentence B: {r}\nDo these two sentences mention a "
         "movie liked by the same person? Answer yes or no.";
}

SynthData generate_synthetic(const SynthConfig& config) {
  if (config.n < 2 || config.n > 900) {
    throw std::invalid_argument("person count must lie in [2, 900]");
  }
  if (config.persons_per_sentence < 1 || config.persons_per_sentence > 20) {
    throw std::invalid_argument("persons per sentence must lie in [1, 20]");
  }
  if (config.distractor_level > 50) {
    throw std::invalid_argument("distractor level must be at most 50");
  }

  Rng rng(config.seed);

  // Persons: a seeded draw from the 40x40 first/last combination grid.
  std::vector<std::pair<std::size_t, std::size_t>> person_combos;
  person_combos.reserve(1600);
  for (std::size_t f = 0; f < 40; ++f) {
    for (std::size_t l = 0; l < 40; ++l) person_combos.emplace_back(f, l);
  }
  rng.shuffle(person_combos);
  std::vector<std::string> persons;
  persons.reserve(config.n);
  for (std::size_t i = 0; i < config.n; ++i) {
    persons.push_back(std::string(kFirstNames[person_combos[i].first]) + " " +
                      kLastNames[person_combos[i].second]);
  }

  // Movies: same idea over the 30x30 adjective/noun grid.
  std::vector<std::pair<std::size_t, std::size_t>> movie_combos;
  movie_combos.reserve(900);
  for (std::size_t a = 0; a < 30; ++a) {
    for (std::size_t n = 0; n < 30; ++n) movie_combos.emplace_back(a, n);
  }
  rng.shuffle(movie_combos);
  std::vector<std::string> movies;
  movies.reserve(config.n);
  for (std::size_t i = 0; i < config.n; ++i) {
    movies.push_back(std::string("The ") +
                     kMovieAdjectives[movie_combos[i].first] + " " +
                     kMovieNouns[movie_combos[i].second]);
  }

  // Filler-person names must never share a token with the real name pools.
  std::set<std::string> reserved;
  for (const auto& pool : {kFirstNames, kLastNames}) {
    for (std::size_t i = 0; i < 40; ++i) {
      for (const auto& t : tokenize(pool[i])) reserved.insert(t);
    }
  }
  for (std::size_t i = 0; i < 30; ++i) {
    for (const auto& t : tokenize(kMovieAdjectives[i])) reserved.insert(t);
    for (const auto& t : tokenize(kMovieNouns[i])) reserved.insert(t);
  }
  std::uint64_t name_counter = 0;
  auto next_extra_name = [&]() {
    while (true) {
      std::string name = syllable_name(name_counter++);
      if (reserved.count(tokenize(name)[0]) == 0) return name;
    }
  };

  std::vector<Record> records;
  records.reserve(2 * config.n);
  ResultSet truth;

  for (std::size_t person = 0; person < config.n; ++person) {
    const std::size_t movie_ids[2] = {person, (person + 1) % config.n};
    for (int edge = 0; edge < 2; ++edge) {
      const std::size_t row = 2 * person + static_cast<std::size_t>(edge);

      std::vector<std::string> names;
      for (std::size_t e = 0; e + 1 < config.persons_per_sentence; ++e) {
        names.push_back(next_extra_name());
      }
      std::size_t base_pos = 0;
      if (config.persons_per_sentence > 1) {
        base_pos = rng.below(config.persons_per_sentence);
      }
      names.insert(names.begin() + static_cast<long>(base_pos),
                   persons[person]);

      std::string sentence =
          join_names(names) +
          (config.persons_per_sentence > 1 ? " like the movie "
                                           : " likes the movie ") +
          movies[movie_ids[edge]];

      std::string text;
      if (config.distractor_level == 0) {
        text = sentence + ".";
      } else {
        const bool variant = rng.below(2) == 1;
        std::string before, after;
        for (std::size_t i = 0; i < config.distractor_level; ++i) {
          if (i) before += " ";
          before += kFillers[rng.below(12)];
        }
        for (std::size_t i = 0; i < config.distractor_level; ++i) {
          if (i) after += " ";
          after += kFillers[rng.below(12)];
        }
        text = before + (variant ? " Notably, " : " For example, ") +
               sentence + ". " + after;
      }

      records.push_back(Record{"r" + std::to_string(row), std::move(text)});
    }
    const auto a = static_cast<std::uint32_t>(2 * person);
    const auto b = static_cast<std::uint32_t>(2 * person + 1);
    truth.insert(PairRef{a, b});
    truth.insert(PairRef{b, a});
  }

  SynthData data;
  data.records = RecordSet(std::move(records), Side::left);
  data.truth = std::move(truth);
  data.meta = nlohmann::json{{"persons", config.n},
                             {"movies", config.n},
                             {"records", 2 * config.n},
                             {"truth_pairs", 2 * config.n},
                             {"persons_per_sentence",
                              config.persons_per_sentence},
                             {"distractor_level", config.distractor_level},
                             {"seed", config.seed}};
  return data;
}

void save_synthetic(const SynthData& data, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  data.records.save_jsonl(dir / "records.jsonl");
  data.truth.save_jsonl(dir / "truth.jsonl", data.records, data.records);
  std::ofstream meta(dir / "meta.json");
  if (!meta) throw DataError("cannot write " + (dir / "meta.json").string());
  meta << data.meta.dump(2) << "\n";
}

}  // namespace fdj
