import runpy
from pathlib import Path

import pytest

import bb84sim

pytestmark = pytest.mark.smoke

DOCS_SOURCE = Path(__file__).resolve().parents[2] / "docs" / "source"


@pytest.fixture(scope="module")
def sphinx_conf():
    return runpy.run_path(str(DOCS_SOURCE / "conf.py"))


def test_docs_track_the_package_version(sphinx_conf):
    assert sphinx_conf["project"] == "bb84sim"
    assert sphinx_conf["release"] == bb84sim.__version__


def test_docs_render_formulas_and_google_docstrings(sphinx_conf):
    extensions = sphinx_conf["extensions"]
    assert "sphinx.ext.mathjax" in extensions
    assert "sphinx.ext.napoleon" in extensions
    assert sphinx_conf["napoleon_google_docstring"]
    assert not sphinx_conf["napoleon_numpy_docstring"]


def test_docs_only_reference_existing_paths(sphinx_conf):
    assert (DOCS_SOURCE / f"{sphinx_conf['root_doc']}.rst").is_file()
    for key in ("templates_path", "html_static_path"):
        for entry in sphinx_conf.get(key, []):
            assert (DOCS_SOURCE / entry).is_dir()
