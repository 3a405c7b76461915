"""Epistemic human-aware task planner.

Plans a robot policy that stays executable while a human collaborator acts on
their own, possibly outdated, view of the task.  The planner tracks the
human's estimated possible worlds, prunes them by what the human can observe,
and inserts the few ask/inform exchanges needed to keep the collaboration
sound.
"""

__version__ = "0.1.0"
