"""
One-page PDF summary of a recorded run.
Uses ReportLab for layout; the import is optional.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Optional, Union

from .result_store import RunRecord


def _get_reportlab():
    try:
        from reportlab.lib.pagesizes import A4
        from reportlab.lib.styles import ParagraphStyle, getSampleStyleSheet
        from reportlab.lib.units import cm
        from reportlab.platypus import Paragraph, Preformatted, SimpleDocTemplate, Spacer
        return A4, getSampleStyleSheet, ParagraphStyle, cm, SimpleDocTemplate, Paragraph, Spacer, Preformatted
    except ImportError:
        return None


def generate_run_pdf(record: RunRecord, output_path: Union[str, Path]) -> Optional[str]:
    """
    Write a PDF summary (experiment, digest, files, summary, warnings) for a run.
    Returns None on success, or an error message on failure.
    """
    lib = _get_reportlab()
    if lib is None:
        return "ReportLab not installed (pip install reportlab)"

    A4, getSampleStyleSheet, ParagraphStyle, cm, SimpleDocTemplate, Paragraph, Spacer, Preformatted = lib
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)

    try:
        doc = SimpleDocTemplate(
            str(output_path),
            pagesize=A4,
            rightMargin=2 * cm,
            leftMargin=2 * cm,
            topMargin=2 * cm,
            bottomMargin=2 * cm,
        )
        styles = getSampleStyleSheet()
        title_style = ParagraphStyle(name="RunTitle", parent=styles["Heading1"], fontSize=16, spaceAfter=12)
        heading_style = styles["Heading2"]
        body_style = styles["Normal"]
        code_style = styles["Code"]

        story = [Paragraph(f"rbsim run: {record.experiment}", title_style), Spacer(1, 0.3 * cm)]
        story.append(Paragraph(f"Run id: {record.id or '(unsaved)'} | {record.timestamp}", body_style))
        story.append(Paragraph(f"Config digest: {record.config_digest}", body_style))
        story.append(Paragraph("Status: " + ("Success" if record.success else "Failed"), body_style))
        if record.error_message:
            story.append(Paragraph(f"Error: {record.error_message}", body_style))
        story.append(Spacer(1, 0.5 * cm))

        story.append(Paragraph("Output files", heading_style))
        story.append(Preformatted("\n".join(record.files) or "(none)", code_style))
        story.append(Spacer(1, 0.5 * cm))

        story.append(Paragraph("Summary", heading_style))
        text = json.dumps(record.summary, indent=2, sort_keys=True, default=str)
        story.append(Preformatted(text[:6000], code_style))

        if record.warnings:
            story.append(Spacer(1, 0.5 * cm))
            story.append(Paragraph("Warnings", heading_style))
            for w in record.warnings:
                story.append(Paragraph(w, body_style))

        doc.build(story)
        return None
    except Exception as e:
        return str(e)
