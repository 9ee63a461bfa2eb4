import pytest

from qsup.qparse import default_object_vocabulary, default_question_types


@pytest.fixture(scope="session")
def obj_vocab():
    return default_object_vocabulary()


@pytest.fixture(scope="session")
def type_table():
    return default_question_types()
