"""Desk-scale multi-task contrastive incomplete-utterance rewriting."""

__version__ = "0.1.0"
