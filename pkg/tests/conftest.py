import pytest

from analogybench.datasets import ConceptRecord, DatasetTag, ReferenceAnalogy


@pytest.fixture
def toy_dataset() -> list[ConceptRecord]:
    return [
        ConceptRecord(
            id="c1",
            target="atom",
            references=(
                ReferenceAnalogy(
                    id="c1-r1",
                    source="solar system",
                    text="electrons orbit the nucleus the way planets orbit the sun",
                ),
            ),
            dataset_tag=DatasetTag.CUSTOM,
        ),
        ConceptRecord(
            id="c2",
            target="the heart",
            references=(
                ReferenceAnalogy(
                    id="c2-r1",
                    source="water pump",
                    text="the heart is a pump pushing fluid through closed pipes",
                ),
            ),
            dataset_tag=DatasetTag.CUSTOM,
        ),
        ConceptRecord(
            id="c3",
            target="DNA",
            references=(
                ReferenceAnalogy(
                    id="c3-r1",
                    source="blueprint",
                    text="dna is a blueprint storing build instructions",
                ),
                ReferenceAnalogy(
                    id="c3-r2",
                    source="recipe book",
                    text="dna is a recipe book of protein recipes",
                ),
            ),
            dataset_tag=DatasetTag.CUSTOM,
        ),
        ConceptRecord(
            id="c4",
            target="natural selection",
            references=(
                ReferenceAnalogy(
                    id="c4-r1",
                    source="sieve",
                    text="natural selection is a sieve keeping what fits",
                ),
            ),
            dataset_tag=DatasetTag.CUSTOM,
        ),
        ConceptRecord(
            id="c5",
            target="electric circuit",
            references=(
                ReferenceAnalogy(
                    id="c5-r1",
                    source="water flowing in pipes",
                    text="current flows like water through pipes pushed by pressure",
                ),
            ),
            dataset_tag=DatasetTag.CUSTOM,
        ),
    ]
