"""
Redis models used to share the cells of a benchmark between several worker
processes: a Queue per (name, priority), a CellJob per (run, settings, k,
repetition) and an Error per failed attempt.
"""
import json
import logging
from datetime import datetime

from dateutil.parser import parse

from limpyd import fields
from limpyd.contrib import database, collection
from limpyd.contrib.indexes import SimpleDateTimeIndex
from limpyd_extensions import related

from mixmode import STATUSES, MixmodeException
from mixmode.bench import BenchCell, BenchSettings, CellResult, run_bench_cell
from mixmode.utils import import_class

__all__ = ('BaseCellModel', 'Queue', 'CellJob', 'Error', 'DEFAULT_QUEUE_NAME')

logger = logging.getLogger('mixmode.models')

DEFAULT_QUEUE_NAME = 'mixmode-bench'

# get_or_connect may fail on concurrent creation, we try again this many times
CONNECT_RETRIES = 10


class BaseCellModel(related.RelatedModel):
    collection_manager = collection.ExtendedCollectionManager
    database = database.PipelineDatabase()
    namespace = 'mixmode'
    abstract = True
    cacheable = False

    def set_fields(self, **values):
        """
        Set many fields at once, each one with its own proxy setter
        """
        for field_name, value in values.items():
            getattr(self, field_name).proxy_set(value)

    @classmethod
    def get_or_connect_retry(cls, **filters):
        """
        ``get_or_connect`` that survives concurrent creations by other
        workers. Return (instance, created).
        """
        for _ in range(CONNECT_RETRIES):
            try:
                return cls.get_or_connect(**filters)
            except IndexError:
                continue
            except ValueError:
                # more than one instance matches: use the first one
                try:
                    return cls.collection(**filters).instances()[0], False
                except IndexError:
                    continue
        raise MixmodeException('Unable to get or create a %s for %s' % (cls.__name__, filters))


class Queue(BaseCellModel):
    name = fields.InstanceHashField(indexable=True)
    priority = fields.InstanceHashField(indexable=True, default=0)  # the higher, the sooner
    waiting = fields.ListField()
    success = fields.ListField()
    errors = fields.ListField()

    @classmethod
    def get_queue(cls, name, priority=0):
        """
        Get, or create, the queue with this name and priority
        """
        queue, _ = cls.get_or_connect_retry(name=name, priority=priority)
        return queue

    def enqueue_job(self, job, prepend=False):
        """
        Append the job to the waiting list (fifo), or prepend it
        """
        getattr(self.waiting, 'lpush' if prepend else 'rpush')(job.ident)

    @staticmethod
    def _names(names):
        if isinstance(names, str):
            names = (names, )
        return names

    @classmethod
    def get_all(cls, names):
        """
        All queues with the given names, whatever their priority
        """
        queues = []
        for name in cls._names(names):
            queues.extend(cls.collection(name=name).instances())
        return queues

    @classmethod
    def get_all_by_priority(cls, names):
        """
        All queues with the given names, the highest priority first
        """
        return sorted(cls.get_all(names), key=lambda queue: int(queue.priority.hget() or 0),
                      reverse=True)

    @classmethod
    def get_waiting_keys(cls, names):
        """
        Keys of the waiting lists, by priority, to pass to blpop
        """
        return [queue.waiting.key for queue in cls.get_all_by_priority(names)]

    @classmethod
    def count_waiting_jobs(cls, names):
        return sum(queue.waiting.llen() for queue in cls.get_all(names))


class CellJob(BaseCellModel):
    """
    One (k, repetition) cell of a benchmark run. ``payload`` holds the json
    cell and settings, ``result`` the json CellResult once done.
    """
    identifier = fields.InstanceHashField(indexable=True)  # "bench:<run>:<digest>:k=<k>:rep=<r>"
    status = fields.InstanceHashField(indexable=True)  # see STATUSES
    priority = fields.InstanceHashField(indexable=True, default=0)
    added = fields.InstanceHashField()
    start = fields.InstanceHashField()
    end = fields.InstanceHashField()
    tries = fields.InstanceHashField()
    queued = fields.InstanceHashField(indexable=True)  # '1' if queued
    payload = fields.InstanceHashField()
    result = fields.InstanceHashField()

    queue_model = Queue
    queue_name = DEFAULT_QUEUE_NAME

    @classmethod
    def get_model_repr(cls):
        return '%s.%s' % (cls.__module__, cls.__name__)

    @property
    def ident(self):
        """
        The string stored in the queues: model path and pk
        """
        return '%s:%s' % (self.get_model_repr(), self.pk.get())

    @classmethod
    def get_from_ident(cls, ident):
        model_repr, pk = ident.split(':', 1)
        return import_class(model_repr).get(pk)

    @staticmethod
    def make_identifier(run, cell, settings):
        return 'bench:%s:%s:k=%d:rep=%d' % (run, settings.digest(), cell.k, cell.repetition)

    @classmethod
    def add_cell(cls, cell, settings, run='default', queue_name=None, priority=None):
        """
        Queue the cell of the given run. The priority defaults to k, so the
        biggest models start first. A cell already waiting is returned as is,
        one still marked as queued but not waiting (its worker died while
        running it) is queued again.
        """
        if priority is None:
            priority = cell.k
        queue_name = queue_name or cls.queue_name
        job, created = cls.get_or_connect_retry(
            identifier=cls.make_identifier(run, cell, settings), queued='1')
        if not created:
            status = job.status.hget()
            if status != STATUSES.WAITING:
                logger.warning('[%s] found with status %s, queued again',
                               job.identifier.hget(), STATUSES.by_value(status, 'UNKNOWN'))
                job.enqueue_again(queue_name, priority)
            return job
        try:
            job.set_fields(
                added=str(datetime.utcnow()),
                payload=json.dumps({'cell': {'k': cell.k, 'repetition': cell.repetition},
                                    'settings': settings.to_dict()}, sort_keys=True),
            )
            job.enqueue(queue_name, priority)
        except Exception:
            job.queued.delete()
            raise
        return job

    def enqueue(self, queue_name=None, priority=None, prepend=False):
        """
        Set the job as waiting and push it in the queue of its priority
        """
        values = {'queued': '1', 'status': STATUSES.WAITING}
        if priority is None:
            priority = self.priority.hget()
        else:
            values['priority'] = priority
        self.hmset(**values)
        queue = self.queue_model.get_queue(queue_name or self.queue_name, priority)
        queue.enqueue_job(self, prepend)

    def enqueue_again(self, queue_name=None, priority=None):
        self.hdel('start', 'end')
        self.enqueue(queue_name, priority)

    def requeue(self, queue_name=None, priority=None):
        """
        Queue again a job that failed
        """
        if self.status.hget() != STATUSES.ERROR:
            raise MixmodeException('Job cannot be requeued if not in ERROR status')
        self.enqueue_again(queue_name, priority)

    def cancel(self):
        """
        Cancel a waiting or running job: workers skip it when they pop it, and
        do not store its result if they were running it
        """
        if self.status.hget() not in (STATUSES.WAITING, STATUSES.RUNNING):
            raise MixmodeException('Only a waiting or running job can be canceled')
        self.queued.delete()
        self.hmset(status=STATUSES.CANCELED, end=str(datetime.utcnow()))

    def _payload(self):
        return json.loads(self.payload.hget())

    @property
    def cell(self):
        data = self._payload()['cell']
        return BenchCell(data['k'], data['repetition'])

    @property
    def settings(self):
        return BenchSettings.from_dict(self._payload()['settings'])

    @property
    def cell_result(self):
        """
        The CellResult stored on success, None before
        """
        data = self.result.hget()
        return CellResult.from_dict(json.loads(data)) if data else None

    def run(self, queue):
        return run_bench_cell(self.cell, self.settings)

    def on_success(self, queue, result):
        self.result.hset(json.dumps(result.to_dict(), sort_keys=True))

    @property
    def duration(self):
        """
        A timedelta if the job started and ended, else None
        """
        start, end = self.hmget('start', 'end')
        if not (start and end):
            return None
        return parse(end) - parse(start)


class Error(BaseCellModel):
    job_model_repr = fields.InstanceHashField(indexable=True)
    job_pk = fields.InstanceHashField(indexable=True)
    identifier = fields.InstanceHashField(indexable=True)
    queue_name = fields.InstanceHashField(indexable=True)
    date_time = fields.InstanceHashField(indexable=True, indexes=[SimpleDateTimeIndex])
    type = fields.InstanceHashField(indexable=True)
    code = fields.InstanceHashField(indexable=True)
    message = fields.InstanceHashField()
    traceback = fields.InstanceHashField()

    @classmethod
    def add_error(cls, queue_name, job, error, when=None, trace=None):
        """
        Store the exception raised by ``job``. Its ``code`` attribute, if
        any, is saved too.
        """
        values = dict(
            queue_name=queue_name,
            job_model_repr=job.get_model_repr(),
            job_pk=job.pk.get(),
            identifier=getattr(job, '_cached_identifier', None) or job.identifier.hget(),
            date_time=str(when or datetime.utcnow()),
            type=error.__class__.__name__,
            message=str(error),
        )
        code = getattr(error, 'code', None)
        if code is not None:
            values['code'] = code
        if trace:
            values['traceback'] = trace
        return cls(**values)

    @classmethod
    def collection_for_job(cls, job):
        return cls.collection(job_model_repr=job.get_model_repr(),
                              identifier=job.identifier.hget())

    @property
    def datetime(self):
        return parse(self.date_time.hget())
