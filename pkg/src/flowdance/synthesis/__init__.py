from flowdance.synthesis.pipeline import (
    composite_subject,
    export_result,
    generate_dance_video,
)

__all__ = ["composite_subject", "export_result", "generate_dance_video"]
