"""Structured logging context: run and stage identifiers"""
import uuid
from typing import Optional, Dict
from contextvars import ContextVar

# Context variables for run tracking
run_id_var: ContextVar[str] = ContextVar('run_id', default='')
stage_var: ContextVar[str] = ContextVar('stage', default='')


def set_run_id(run_id: Optional[str] = None) -> str:
    """Set run ID for log correlation

    Returns:
        The run ID (generated if not provided)
    """
    if not run_id:
        run_id = uuid.uuid4().hex[:12]

    run_id_var.set(run_id)
    return run_id


def set_stage(stage: str) -> str:
    """Set the active pipeline stage; returns the previous one"""
    previous = stage_var.get()
    stage_var.set(stage)
    return previous


def clear_context():
    """Clear all context variables"""
    run_id_var.set('')
    stage_var.set('')


def get_context() -> Dict[str, str]:
    """Get all context variables

    Returns:
        Dict with current context
    """
    return {
        "run_id": run_id_var.get(),
        "stage": stage_var.get()
    }
