
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import accepted_sample, rationale
from reflectkit.stats import (
    NOUN_EDGES,
    WORD_EDGES,
    StatsAccumulator,
    bucket_index,
    bucket_labels,
    compute_stats,
    heuristic_noun_count,
    noun_count,
    word_count,
)

# 20 sentences with their nouns marked by hand
SENTENCES = [
    ("The dog sleeps under the table.", ["dog", "table"]),
    ("Three birds sit on the fence near the house.", ["birds", "fence", "house"]),
    ("A woman holds an umbrella in the rain.", ["woman", "umbrella", "rain"]),
    ("The car's wheels are covered in mud.", ["car's", "wheels", "mud"]),
    ("Two children are eating pizza at the kitchen table.", ["children", "pizza", "kitchen", "table"]),
    ("There is a clock on the wall above the door.", ["clock", "wall", "door"]),
    ("The train stops at the station every morning.", ["train", "station", "morning"]),
    ("A cat is sitting on the roof of a building.", ["cat", "roof", "building"]),
    ("The sky is clear and the sun is bright.", ["sky", "sun"]),
    ("He carries a bag and a bottle of water.", ["bag", "bottle", "water"]),
    ("The boat floats on the river beside the bridge.", ["boat", "river", "bridge"]),
    ("Several horses graze in the field behind the farm.", ["horses", "field", "farm"]),
    ("The man wears a hat, a jacket and boots.", ["man", "hat", "jacket", "boots"]),
    ("A phone and a laptop lie on the desk.", ["phone", "laptop", "desk"]),
    ("The flowers in the garden are yellow.", ["flowers", "garden"]),
    ("The player kicks the ball toward the goal.", ["player", "ball", "goal"]),
    ("Snow covers the mountains and the trees.", ["snow", "mountains", "trees"]),
    ("The bus is parked next to the street sign.", ["bus", "street", "sign"]),
    ("A girl reads a book in the library.", ["girl", "book", "library"]),
    ("Because it is quickly getting dark, they go home.", ["home"]),
]


@pytest.mark.parametrize(
    "text,expected",
    [
        ("", 0),
        ("The sky is blue.", 4),
        ("  spaced   out\ttext\n", 3),
        ("Wait - what ... really?!", 3),
        ("— … !!", 0),
        ("e.g. 3.5 kg", 3),
    ],
)
def test_word_count(text, expected):
    assert word_count(text) == expected


def test_word_count_fixture_paragraph():
    paragraph = (
        "The bird on the left is a blue jay: its crest, white chest and barred wings - all visible "
        "near the feeder - rule out a bluebird , which has no crest."
    )
    # hand count, skipping the two lone dashes and the lone comma
    assert word_count(paragraph) == 29


def test_noun_count_with_tiny_lexicon():
    assert noun_count("run quickly", {"dog", "sky"}) == 0
    assert noun_count("the dog saw a dog", {"dog"}) == 2
    assert noun_count("The Dog's bowl. DOG!", {"dog"}) == 2


@pytest.mark.parametrize("text,nouns", SENTENCES)
def test_noun_count_matches_hand_annotation(text, nouns):
    assert noun_count(text) == len(nouns)


def test_noun_count_from_lexicon_file(tmp_path):
    path = tmp_path / "lex.txt"
    path.write_text("Dog\ncat\n\n")
    assert noun_count("a dog and a cat and a cow", path) == 2
    with pytest.raises(OSError):
        noun_count("x", tmp_path / "missing.txt")


def test_heuristic_noun_count():
    assert heuristic_noun_count("the dog quickly ran") == 2  # "dog", "ran" (bare verbs over-count)
    assert heuristic_noun_count("it is beautiful and running") == 0


def test_bucket_labels_and_index():
    assert bucket_labels(WORD_EDGES)[0] == "0-4"
    assert bucket_labels(WORD_EDGES)[-1] == "100+"
    assert bucket_labels(NOUN_EDGES) == ["0-1", "2-3", "4-5", "6-7", "8-9", "10-14", "15+"]
    assert bucket_index(25, WORD_EDGES) == 5
    assert bucket_index(10_000, WORD_EDGES) == len(WORD_EDGES) - 2


def test_empty_input_gives_zero_stats():
    s = compute_stats([])
    assert (s.n_images, s.n_instructions, s.n_instances, s.avg_negatives_per_instruction) == (0, 0, 0, 0.0)
    assert sum(s.rationale_length_hist.values()) == 0
    assert "training instances" in s.to_table()


def _sample_with_lengths(idx, lengths, task_type="short_answer"):
    s = accepted_sample(len(lengths) - 1, idx, task_type=task_type)
    texts = [" ".join(["word"] * n) for n in lengths]
    s.pos_rationale = rationale("positive", s.positive_response, texts[0])
    s.neg_rationales = [rationale("negative", neg, t) for neg, t in zip(s.negative_responses, texts[1:])]
    return s


# ten samples: rationale word counts per sample (positive first)
FIXTURE = [
    [3], [7, 12], [26, 31, 40], [18], [55, 4], [100], [24, 25], [9, 75, 99], [49], [30, 30],
]


def test_histogram_matches_hand_tally():
    samples = [_sample_with_lengths(i, lengths) for i, lengths in enumerate(FIXTURE)]
    samples[0].image_ref = samples[1].image_ref  # two instructions on one image
    stats = compute_stats(samples)
    # hand tally of the 18 lengths above into [0,5,10,15,20,25,30,40,50,75,100,inf)
    assert stats.rationale_length_hist == {
        "0-4": 2,    # 3, 4
        "5-9": 2,    # 7, 9
        "10-14": 1,  # 12
        "15-19": 1,  # 18
        "20-24": 1,  # 24
        "25-29": 2,  # 25, 26
        "30-39": 3,  # 30, 30, 31
        "40-49": 2,  # 40, 49
        "50-74": 1,  # 55
        "75-99": 2,  # 75, 99
        "100+": 1,   # 100
    }
    assert stats.n_images == 9
    assert stats.n_instructions == stats.n_pos_responses == 10
    assert stats.n_neg_responses == 8  # 0+1+2+0+1+0+1+2+0+1
    assert stats.n_instances == 18
    assert stats.avg_negatives_per_instruction == 0.8
    assert sum(stats.noun_count_hist.values()) == 18


def test_task_type_counts_sum_to_instructions():
    types = ["yes_no", "multiple_choice", "open_ended", "yes_no", "short_answer"]
    stats = compute_stats([accepted_sample(i % 3, i, task_type=t) for i, t in enumerate(types)])
    assert stats.task_type_counts == {"multiple_choice": 1, "short_answer": 1, "open_ended": 1, "yes_no": 2}
    assert sum(stats.task_type_counts.values()) == stats.n_instructions


def test_lexicon_override_recounts_nouns():
    s = accepted_sample(0)
    s.pos_rationale = rationale("positive", s.positive_response, "dog dog dog dog")
    s.pos_rationale.noun_count = 0
    assert compute_stats([s]).noun_count_hist["0-1"] == 1
    assert compute_stats([s], lexicon={"dog"}).noun_count_hist["4-5"] == 1


def test_full_scale_accounting():
    acc = StatsAccumulator()
    acc.n_instructions, acc.n_neg = 115_280, 138_897
    stats = acc.result()
    assert stats.n_instances == 254_177
    assert stats.avg_negatives_per_instruction == 138_897 / 115_280
    assert round(stats.avg_negatives_per_instruction, 4) == 1.2049


_samples = st.lists(st.tuples(st.integers(0, 4), st.sampled_from(["yes_no", "open_ended"])), max_size=12)


@settings(max_examples=60, deadline=None)
@given(_samples, st.randoms(use_true_random=False))
def test_stats_are_permutation_invariant(spec, rnd):
    samples = [accepted_sample(n, i, task_type=t) for i, (n, t) in enumerate(spec)]
    shuffled = samples[:]
    rnd.shuffle(shuffled)
    assert compute_stats(samples).to_dict() == compute_stats(shuffled).to_dict()


def _acc(samples):
    acc = StatsAccumulator()
    for s in samples:
        acc.add(s)
    return acc


@settings(max_examples=60, deadline=None)
@given(_samples, st.integers(0, 12), st.integers(0, 12))
def test_merge_is_associative_and_commutative(spec, i, j):
    samples = [accepted_sample(n, k, task_type=t) for k, (n, t) in enumerate(spec)]
    i, j = sorted((min(i, len(samples)), min(j, len(samples))))
    a, b, c = _acc(samples[:i]), _acc(samples[i:j]), _acc(samples[j:])
    whole = _acc(samples).result().to_dict()
    assert a.merge(b).merge(c).result().to_dict() == whole
    assert a.merge(b.merge(c)).result().to_dict() == whole
    assert c.merge(a).merge(b).result().to_dict() == whole


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 6), max_size=10))
def test_histogram_totals_equal_rationale_count(neg_counts):
    stats = compute_stats([accepted_sample(n, i) for i, n in enumerate(neg_counts)])
    n_rationales = sum(n + 1 for n in neg_counts)
    assert sum(stats.rationale_length_hist.values()) == n_rationales
    assert sum(stats.noun_count_hist.values()) == n_rationales
    assert stats.n_instances == stats.n_pos_responses + stats.n_neg_responses
    if neg_counts:
        assert stats.avg_negatives_per_instruction == sum(neg_counts) / len(neg_counts)
