"""Teleophthalmology service: storage, domain core, and the HTTP API."""

from .api import create_app
from .core import ServiceCore, ServiceError, TS_FORMAT
from .pdfgen import render_text_pdf
from .store import BlobStore, RecordStore
