"""
Lab Hooks Module

Hooks run OUTSIDE the agent logic and control the round loop.

The Stop Hook is the only component that ends a run.
"""

from .base_hook import BaseHook, HookAction, HookContext, HookResult
from .stop_hook import StopHook
from .post_round_hook import PostRoundHook

__all__ = [
    "BaseHook",
    "HookAction",
    "HookContext",
    "HookResult",
    "StopHook",
    "PostRoundHook",
]
