class ExportError(Exception):
    """Any export failure: bad spec, unknown model, or encoder trouble."""
