"""
Sync-aware submission and the global synchronization completion rate.

SIGNAL flags the signaling thread's current segment and, with sync submission
on, submits it. WAIT submits the waiter's segment and snapshots into the
waiter's detection list every flagged segment of another thread that analysis
has not finished yet, plus every flag raised since the waiter's previous
snapshot. Flags raised while the waiter is blocked are added when the wait
returns, and the list is attached to the waiter's current segment.

Before analysis begins that segment, each entry whose flagged segment is still
unfinished counts toward DFN. With sync submission on, the segment is also held
back until every entry has finished, so the waiter's analysis always sees the
signaler's taint.

    GSR = (CFN - DFN) / CFN,  1.0 when CFN = 0
"""

from typing import Dict, List, Sequence, Set, Tuple

from loguru import logger

from channel.record_buffer import SubmitReason
from channel.record_channel import RecordChannel, SegmentListener

DetectionEntry = Tuple[int, int]    # (owner tid, segment id)


def compute_gsr(cfn: int, dfn: int) -> float:
    """Fraction of checkpoint entries whose flagged segment was already analyzed."""
    if cfn == 0:
        return 1.0
    return (cfn - dfn) / cfn


class SyncState(SegmentListener):
    """Registry of flagged segments, detection lists and the WSN/SSN/CFN/DFN counters."""

    def __init__(self, sync_submit: bool = True):
        self.sync_submit = sync_submit
        self.channels: Dict[int, RecordChannel] = {}
        self.flagged: Dict[int, Set[int]] = {}
        self.detection: Dict[int, List[DetectionEntry]] = {}
        self.checkpoints: Dict[int, List[DetectionEntry]] = {}
        self.finished: Set[int] = set()
        self.wsn = 0
        self.ssn = 0
        self.cfn = 0
        self.dfn = 0
        self._flag_log: List[DetectionEntry] = []
        self._seen: Dict[int, int] = {}
        self._judged: Set[int] = set()

    def register(self, tid: int, channel: RecordChannel) -> None:
        self.channels[tid] = channel
        self.flagged.setdefault(tid, set())
        self.detection.setdefault(tid, [])
        self._seen.setdefault(tid, len(self._flag_log))

    # Target side

    def on_signal(self, tid: int) -> None:
        """Called before SIGNAL takes effect."""
        self.ssn += 1
        channel = self.channels[tid]
        if self.sync_submit:
            segment = channel.current_segment if channel.pending_entries else None
        else:
            segment = channel.flag_current()
        if segment is not None:
            # Flag first: submission may run analysis to completion on this segment.
            self.flagged[tid].add(segment)
            self._flag_log.append((tid, segment))
            logger.debug(f"Thread {tid} flagged segment {segment}")
        if self.sync_submit:
            channel.submit_current(SubmitReason.SYNC_SIGNAL)

    def on_wait(self, tid: int) -> None:
        """Called before WAIT blocks."""
        self.wsn += 1
        if self.sync_submit:
            self.channels[tid].submit_current(SubmitReason.SYNC_WAIT)
        outstanding = [(owner, segment) for owner, segments in sorted(self.flagged.items()) if owner != tid
                       for segment in sorted(segments)]
        self._record(tid, outstanding + self._raised_since_snapshot(tid))

    def on_wait_return(self, tid: int) -> None:
        """Attach the waiter's detection list to the segment that records its post-wait code."""
        self._record(tid, self._raised_since_snapshot(tid))
        pending = self.detection[tid]
        if not pending:
            return
        self.detection[tid] = []
        segment = self.channels[tid].current_segment
        if segment is None:
            return
        self.checkpoints.setdefault(segment, []).extend(pending)

    def _raised_since_snapshot(self, tid: int) -> List[DetectionEntry]:
        start = self._seen.get(tid, 0)
        self._seen[tid] = len(self._flag_log)
        return [entry for entry in self._flag_log[start:] if entry[0] != tid]

    def _record(self, tid: int, entries: Sequence[DetectionEntry]) -> None:
        listed = self.detection[tid]
        fresh = [entry for entry in dict.fromkeys(entries) if entry not in listed]
        listed.extend(fresh)
        self.cfn += len(fresh)

    # Analysis side

    def segment_ready(self, tid: int, segment: int) -> bool:
        entries = self.checkpoints.get(segment)
        if not entries:
            return True
        if segment not in self._judged:
            self._judged.add(segment)
            self._count_unfinished(tid, entries)
        if not self.sync_submit:
            return True
        return all(flagged_segment in self.finished for _, flagged_segment in entries)

    def segment_begun(self, tid: int, segment: int) -> None:
        entries = self.checkpoints.pop(segment, ())
        if segment in self._judged:
            self._judged.discard(segment)
        else:
            self._count_unfinished(tid, entries)

    def _count_unfinished(self, tid: int, entries: Sequence[DetectionEntry]) -> None:
        for owner, flagged_segment in entries:
            if flagged_segment not in self.finished:
                self.dfn += 1
                logger.debug(f"Thread {tid} reached its post-wait analysis before segment {flagged_segment} "
                             f"of thread {owner} was processed")

    def segment_finished(self, tid: int, segment: int) -> None:
        self.finished.add(segment)
        self.flagged.get(tid, set()).discard(segment)

    # Results

    @property
    def gsr(self) -> float:
        return compute_gsr(self.cfn, self.dfn)

    def to_dict(self) -> Dict:
        return {'wsn': self.wsn, 'ssn': self.ssn, 'cfn': self.cfn, 'dfn': self.dfn, 'gsr': self.gsr}
