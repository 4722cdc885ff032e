from .chunk_worker import ChunkWorker
