from pathlib import Path

import pytest

from fusion_ensemble.equations import RELATIONS, markdown_table

DOCS = Path(__file__).resolve().parents[1] / "docs"


def test_equation_doc_embeds_current_table():
    assert markdown_table() in (DOCS / "equations.md").read_text(encoding="utf-8")


def test_relation_names_unique():
    names = [r.name for r in RELATIONS]
    assert len(names) == len(set(names))


@pytest.mark.parametrize("relation", RELATIONS, ids=lambda r: r.name)
def test_every_relation_resolves_to_callable(relation):
    assert callable(relation.resolve())
