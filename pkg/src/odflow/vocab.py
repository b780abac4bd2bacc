"""POI category vocabulary.

A vocabulary is an ordered list of category names. The order is load-bearing:
feature vectors, rendered POI lists, and parsed responses all index into it.
Name lookup is case-insensitive; the canonical spelling is whatever the
vocabulary was built with.
"""

from dataclasses import dataclass, field

from .exceptions import VocabularyError

# Default category set used when no vocabulary file is supplied.
DEFAULT_CATEGORIES: tuple[str, ...] = (
    "Residential Area",
    "Food & Cuisine",
    "Commercial Building",
    "Infrastructure",
    "Tourist Attraction",
    "Organization",
    "Education & School",
    "Hotel",
    "Shopping",
    "Healthcare",
    "Company & Enterprise",
    "Industrial Park",
    "Automobile",
    "Real Estate Community Affiliated",
    "Sports & Fitness",
    "Entertainment & Leisure",
    "Cultural Venue",
    "Life Services",
    "Place Name & Address",
    "Banking & Finance",
    "Indoor & Affiliated Facilities",
    "Other Real Estate Community",
    "Others",
)


@dataclass(frozen=True)
class Vocabulary:
    """Ordered, case-insensitively unique set of POI category names."""

    names: tuple[str, ...]
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.names:
            raise VocabularyError("vocabulary must contain at least one category")
        index: dict[str, int] = {}
        for i, name in enumerate(self.names):
            key = name.strip().casefold()
            if not key:
                raise VocabularyError(f"category {i} is blank")
            if key in index:
                raise VocabularyError(f"duplicate category name: {name!r}")
            index[key] = i
        object.__setattr__(self, "_index", index)

    @property
    def size(self) -> int:
        return len(self.names)

    def __len__(self) -> int:
        return len(self.names)

    def index_of(self, name: str) -> int:
        """Return the position of ``name`` (case-insensitive)."""
        try:
            return self._index[name.strip().casefold()]
        except KeyError:
            raise VocabularyError(f"unknown POI category: {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name.strip().casefold() in self._index

    @classmethod
    def default(cls) -> "Vocabulary":
        return cls(DEFAULT_CATEGORIES)

    @classmethod
    def from_file(cls, path) -> "Vocabulary":
        """Load a vocabulary from a text file, one category per line.

        Blank lines are skipped. Order in the file is the vocabulary order.
        """
        with open(path, encoding="utf-8") as fh:
            names = tuple(line.strip() for line in fh if line.strip())
        if not names:
            raise VocabularyError(f"vocabulary file {path} contains no categories")
        return cls(names)

    def to_lines(self) -> str:
        return "\n".join(self.names) + "\n"
