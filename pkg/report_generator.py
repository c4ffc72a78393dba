from reportlab.lib.pagesizes import A4
from reportlab.platypus import SimpleDocTemplate, Paragraph, Spacer, Table, TableStyle
from reportlab.lib.styles import getSampleStyleSheet, ParagraphStyle
from reportlab.lib.units import inch
from reportlab.lib import colors
from reportlab.lib.enums import TA_CENTER
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from quality import format_number

# Published scores on test images that are not distributed here; context only.
REFERENCE_SCORES = {
    "synthetic": [
        ("fast", 19.49, 0.943),
        ("tv", 21.81, 0.951),
        ("harmonic", 20.82, 0.948),
        ("tensor", 28.20, 0.982),
    ],
    "photograph": [
        ("fast", 31.92, 0.965),
        ("tv", 32.08, 0.968),
        ("harmonic", 31.78, 0.963),
        ("tensor", 33.78, 0.978),
    ],
}

METHOD_LABELS = {
    "fast": "Fast convolution inpainting",
    "tv": "TV inpainting",
    "harmonic": "Harmonic inpainting",
    "tensor": "Structure-tensor diffusion",
    "ced": "Coherence-enhancing diffusion",
}

TABLE_STYLE = TableStyle([
    ('BACKGROUND', (0, 0), (-1, 0), colors.grey),
    ('TEXTCOLOR', (0, 0), (-1, 0), colors.whitesmoke),
    ('ALIGN', (0, 0), (-1, -1), 'LEFT'),
    ('FONTNAME', (0, 0), (-1, 0), 'Helvetica-Bold'),
    ('FONTSIZE', (0, 0), (-1, 0), 10),
    ('BOTTOMPADDING', (0, 0), (-1, 0), 12),
    ('BACKGROUND', (0, 1), (-1, -1), colors.beige),
    ('GRID', (0, 0), (-1, -1), 1, colors.black),
    ('VALIGN', (0, 0), (-1, -1), 'MIDDLE'),
])


class ReportGenerator:
    def __init__(self):
        self.styles = getSampleStyleSheet()
        self._create_custom_styles()

    def _create_custom_styles(self):
        """Create custom paragraph styles for the report"""
        self.title_style = ParagraphStyle(
            'CustomTitle',
            parent=self.styles['Heading1'],
            fontSize=18,
            spaceAfter=30,
            alignment=TA_CENTER,
            textColor=colors.darkblue
        )

        self.section_style = ParagraphStyle(
            'CustomSection',
            parent=self.styles['Heading2'],
            fontSize=14,
            spaceAfter=12,
            spaceBefore=20,
            textColor=colors.darkblue
        )

        self.normal_style = ParagraphStyle(
            'CustomNormal',
            parent=self.styles['Normal'],
            fontSize=10,
            spaceAfter=6
        )

    def generate_report(self, rows: List[Dict[str, Any]], filename: Union[str, Path],
                        parameters: Optional[Dict[str, Any]] = None):
        """Generate a PDF comparison table from benchmark rows"""
        doc = SimpleDocTemplate(str(filename), pagesize=A4)
        story = [Paragraph("Inpainting Benchmark", self.title_style), Spacer(1, 20)]

        images = sorted({row["image"] for row in rows})
        if images:
            story.append(Paragraph(f"Image: {', '.join(images)}", self.normal_style))
        if parameters:
            settings = ", ".join(f"{key}={format_number(value)}" for key, value in parameters.items())
            story.append(Paragraph(f"Parameters: {settings}", self.normal_style))
        story.append(Spacer(1, 10))

        story.append(Paragraph("MEASURED", self.section_style))
        story.append(self._measured_table(rows))
        story.append(Spacer(1, 20))

        story.extend(self._reference_section())
        doc.build(story)

    def measured_table_data(self, rows: List[Dict[str, Any]]) -> List[List[str]]:
        table_data = [["Method", "PSNR (dB)", "MSSIM", "MSE", "Iterations", "Seconds"]]
        for row in rows:
            table_data.append([
                METHOD_LABELS.get(row["method"], row["method"]),
                _fixed(row["psnr_db"], 2),
                _fixed(row["mssim"], 4),
                _fixed(row["mse"], 3),
                str(row["iterations"]),
                _fixed(row.get("seconds"), 3),
            ])
        return table_data

    def _measured_table(self, rows):
        table = Table(self.measured_table_data(rows),
                      colWidths=[2.4*inch, 0.9*inch, 0.8*inch, 0.9*inch, 0.8*inch, 0.8*inch])
        table.setStyle(TABLE_STYLE)
        return table

    def _reference_section(self):
        """Published scores, labelled as not comparable with the measured rows"""
        elements = [
            Paragraph("PUBLISHED REFERENCE", self.section_style),
            Paragraph(
                "Scores reported for the original synthetic and photographic test images. "
                "Those images are not available, so these numbers are context only.",
                self.normal_style,
            ),
        ]
        table_data = [["Method", "Synthetic PSNR", "Synthetic MSSIM", "Photo PSNR", "Photo MSSIM"]]
        photo = {method: (p, s) for method, p, s in REFERENCE_SCORES["photograph"]}
        for method, psnr_db, mssim in REFERENCE_SCORES["synthetic"]:
            photo_psnr, photo_mssim = photo[method]
            table_data.append([METHOD_LABELS[method], f"{psnr_db:.2f}", f"{mssim:.3f}",
                               f"{photo_psnr:.2f}", f"{photo_mssim:.3f}"])
        table = Table(table_data, colWidths=[2.4*inch, 1.0*inch, 1.1*inch, 0.9*inch, 1.0*inch])
        table.setStyle(TABLE_STYLE)
        elements.append(table)
        return elements


def _fixed(value, digits: int) -> str:
    if value is None:
        return "-"
    if value == float("inf"):
        return "inf"
    return f"{value:.{digits}f}"
