"""Execution-time extension of planning tasks with newly discovered objects.

Builds a taxonomy from a planning task, matches it against candidate
ontologies, positions new object types, formulates candidate goals, and
validates them with a built-in temporal planner inside a timed-event
execution simulator.
"""

__version__ = "0.1.0"
