import numpy as np
import pytest

GENRES = (
    "unknown", "Action", "Adventure", "Animation", "Children's", "Comedy",
    "Crime", "Documentary", "Drama", "Fantasy", "Film-Noir", "Horror",
    "Musical", "Mystery", "Romance", "Sci-Fi", "Thriller", "War", "Western",
)


def write_ml100k_style(
    dir_path, n_users=60, n_items=40, n_clusters=4, seed=0
):
    """Synthetic dataset in ML-100K file format with clustered preferences.

    Each user favors one item cluster: in-cluster items rate 4-5, the rest
    1-3. Items carry two genre flags tied to their cluster so category-based
    diversity is meaningful.
    """
    rng = np.random.default_rng(seed)
    lines = []
    for u in range(1, n_users + 1):
        cluster = (u - 1) % n_clusters
        for i in range(1, n_items + 1):
            if rng.random() < 0.65:
                continue  # unobserved pair
            in_cluster = (i - 1) % n_clusters == cluster
            if in_cluster:
                rating = 4 + int(rng.random() < 0.5)
            else:
                rating = 1 + int(rng.random() * 3)
            lines.append(f"{u}\t{i}\t{rating}\t{880000000 + u * 1000 + i}")
    (dir_path / "u.data").write_text("\n".join(lines) + "\n")

    item_lines = []
    for i in range(1, n_items + 1):
        cluster = (i - 1) % n_clusters
        flags = [0] * len(GENRES)
        flags[1 + cluster] = 1
        flags[1 + n_clusters + cluster] = 1
        item_lines.append(
            f"{i}|Item {i} (1995)|01-Jan-1995||http://example/{i}|"
            + "|".join(map(str, flags))
        )
    (dir_path / "u.item").write_text("\n".join(item_lines) + "\n")
    return dir_path


@pytest.fixture(scope="session")
def ml100k_style_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("mini100k")
    return write_ml100k_style(d)
