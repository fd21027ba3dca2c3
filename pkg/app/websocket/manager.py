import json
import logging
from typing import Dict, Set
from fastapi import WebSocket

logger = logging.getLogger(__name__)


class ConnectionManager:
    """Census job progress fan-out; job_id -> open WebSocket connections"""

    def __init__(self):
        self.active_connections: Dict[str, Set[WebSocket]] = {}

    async def connect(self, websocket: WebSocket, job_id: str):
        await websocket.accept()
        self.active_connections.setdefault(job_id, set()).add(websocket)
        logger.debug(f"listener attached to job {job_id}")

    def disconnect(self, websocket: WebSocket, job_id: str):
        listeners = self.active_connections.get(job_id)
        if listeners is None:
            return
        listeners.discard(websocket)
        if not listeners:
            del self.active_connections[job_id]

    def listeners(self, job_id: str) -> int:
        return len(self.active_connections.get(job_id, ()))

    async def send_message(self, job_id: str, message: dict):
        message_json = json.dumps(message)
        stale = []
        for connection in list(self.active_connections.get(job_id, ())):
            try:
                await connection.send_text(message_json)
            except Exception as e:
                logger.warning(f"dropping listener of job {job_id}: {e}")
                stale.append(connection)
        for connection in stale:
            self.disconnect(connection, job_id)

    async def broadcast_progress(self, job_id: str, message_type: str, data: dict):
        """signature_started, signature_done, job_complete or job_failed"""
        await self.send_message(job_id, {"type": message_type, "data": data})


manager = ConnectionManager()
