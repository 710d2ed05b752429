"""Symbol registries: entities, classes, attributes, predicates, instances.

Every symbol gets a unique integer id from a single counter, so id spaces of
the five kinds are disjoint by construction.  Classes and attributes are
grouped into named label families; sampling and evaluation treat each family
as one categorical variable.  The identity family groups the entity indices
themselves so that an entity id can be predicted like any other label.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum


HAS_ATTRIBUTE = "hasAttribute"
IDENTITY_FAMILY = "Identity"


class Kind(str, Enum):
    ENTITY = "entity"
    CLASS = "class"
    ATTRIBUTE = "attribute"
    PREDICATE = "predicate"
    INSTANCE = "instance"


class VocabError(ValueError):
    pass


@dataclass
class Vocabulary:
    """Mutable symbol table. Ids are dense ints in registration order."""

    _names: list[str] = field(default_factory=list)
    _kinds: list[Kind] = field(default_factory=list)
    _ids: dict[str, int] = field(default_factory=dict)
    _families: dict[str, list[int]] = field(default_factory=dict)
    _family_of: dict[int, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if HAS_ATTRIBUTE not in self._ids:
            self._register(HAS_ATTRIBUTE, Kind.PREDICATE)
        self._families.setdefault(IDENTITY_FAMILY, [])

    # -- registration ------------------------------------------------------

    def _register(self, name: str, kind: Kind) -> int:
        if not name:
            raise VocabError("empty symbol name")
        if name in self._ids:
            raise VocabError(f"duplicate symbol {name!r}")
        idx = len(self._names)
        self._names.append(name)
        self._kinds.append(kind)
        self._ids[name] = idx
        return idx

    def add_entity(self, name: str) -> int:
        idx = self._register(name, Kind.ENTITY)
        self._families[IDENTITY_FAMILY].append(idx)
        self._family_of[idx] = IDENTITY_FAMILY
        return idx

    def add_class(self, name: str) -> int:
        return self._register(name, Kind.CLASS)

    def add_attribute(self, name: str) -> int:
        return self._register(name, Kind.ATTRIBUTE)

    def add_predicate(self, name: str) -> int:
        return self._register(name, Kind.PREDICATE)

    def add_instance(self, name: str) -> int:
        return self._register(name, Kind.INSTANCE)

    def define_family(self, family: str, members: list[str]) -> None:
        """Group class/attribute symbols into one categorical label family."""
        if family == IDENTITY_FAMILY:
            raise VocabError(f"{IDENTITY_FAMILY!r} is maintained automatically")
        if family in self._families:
            raise VocabError(f"duplicate family {family!r}")
        if not members:
            raise VocabError(f"family {family!r} has no members")
        ids = []
        for name in members:
            idx = self.id_of(name)
            if self._kinds[idx] not in (Kind.CLASS, Kind.ATTRIBUTE):
                raise VocabError(f"family member {name!r} is not a class or attribute")
            if idx in self._family_of:
                raise VocabError(f"{name!r} already belongs to {self._family_of[idx]!r}")
            ids.append(idx)
        self._families[family] = ids
        for idx in ids:
            self._family_of[idx] = family

    # -- lookups -----------------------------------------------------------

    def id_of(self, name: str) -> int:
        try:
            return self._ids[name]
        except KeyError:
            raise VocabError(f"unknown symbol {name!r}") from None

    def name_of(self, idx: int) -> str:
        return self._names[idx]

    def kind_of(self, idx: int) -> Kind:
        return self._kinds[idx]

    def family_of(self, idx: int) -> str | None:
        return self._family_of.get(idx)

    def __len__(self) -> int:
        return len(self._names)

    def __contains__(self, name: str) -> bool:
        return name in self._ids

    def _of_kind(self, kind: Kind) -> tuple[int, ...]:
        return tuple(i for i, k in enumerate(self._kinds) if k is kind)

    @property
    def entities(self) -> tuple[int, ...]:
        return self._of_kind(Kind.ENTITY)

    @property
    def classes(self) -> tuple[int, ...]:
        return self._of_kind(Kind.CLASS)

    @property
    def attributes(self) -> tuple[int, ...]:
        return self._of_kind(Kind.ATTRIBUTE)

    @property
    def instances(self) -> tuple[int, ...]:
        return self._of_kind(Kind.INSTANCE)

    @property
    def predicates(self) -> tuple[int, ...]:
        return self._of_kind(Kind.PREDICATE)

    @property
    def has_attribute(self) -> int:
        return self._ids[HAS_ATTRIBUTE]

    @property
    def binary_predicates(self) -> tuple[int, ...]:
        ha = self.has_attribute
        return tuple(i for i in self._of_kind(Kind.PREDICATE) if i != ha)

    @property
    def concepts(self) -> tuple[int, ...]:
        """Entities, classes and attributes: everything a subject/object head ranks."""
        return tuple(
            i for i, k in enumerate(self._kinds)
            if k in (Kind.ENTITY, Kind.CLASS, Kind.ATTRIBUTE)
        )

    @property
    def labels(self) -> tuple[int, ...]:
        return tuple(
            i for i, k in enumerate(self._kinds)
            if k in (Kind.CLASS, Kind.ATTRIBUTE)
        )

    @property
    def families(self) -> dict[str, tuple[int, ...]]:
        return {name: tuple(ids) for name, ids in self._families.items()}

    def family_members(self, family: str) -> tuple[int, ...]:
        try:
            return tuple(self._families[family])
        except KeyError:
            raise VocabError(f"unknown family {family!r}") from None

    def validate(self) -> None:
        seen: set[int] = set()
        for family, ids in self._families.items():
            if not ids and family != IDENTITY_FAMILY:
                raise VocabError(f"family {family!r} is empty")
            overlap = seen.intersection(ids)
            if overlap:
                raise VocabError(f"family {family!r} overlaps on ids {sorted(overlap)}")
            seen.update(ids)

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        names = lambda ids: [self._names[i] for i in ids]  # noqa: E731
        return {
            "entities": names(self.entities),
            "classes": names(self.classes),
            "attributes": names(self.attributes),
            "predicates": names(self.predicates),
            "instances": names(self.instances),
            "families": {f: names(ids) for f, ids in self._families.items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Vocabulary":
        vocab = cls()
        adders = {
            "entities": vocab.add_entity,
            "classes": vocab.add_class,
            "attributes": vocab.add_attribute,
            "instances": vocab.add_instance,
        }
        # Preserve registration order: ids are positional, so replay kinds in
        # the order the export interleaves them is not needed; exports are
        # grouped by kind and re-imports only need name->kind fidelity.
        for name in data.get("predicates", []):
            if name != HAS_ATTRIBUTE:
                vocab.add_predicate(name)
        for key in ("entities", "classes", "attributes", "instances"):
            for name in data.get(key, []):
                adders[key](name)
        for family, members in data.get("families", {}).items():
            if family == IDENTITY_FAMILY:
                continue
            vocab.define_family(family, members)
        vocab.validate()
        return vocab

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "Vocabulary":
        return cls.from_dict(json.loads(text))

    def digest(self) -> str:
        return hashlib.sha256(
            json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        ).hexdigest()
