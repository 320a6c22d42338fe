import logging
import os.path
import signal
import sys
import threading
import traceback
from datetime import datetime, timedelta
from optparse import make_option, OptionParser
from time import sleep

from setproctitle import setproctitle

from limpyd import EXACT_VERSION as limpyd_version
from limpyd.exceptions import DoesNotExist

from mixmode import STATUSES, MixmodeException, ConfigurationException
from mixmode.models import Queue, CellJob, Error, DEFAULT_QUEUE_NAME
from mixmode.utils import import_class
from mixmode.version import EXACT_VERSION as mixmode_version

__all__ = ('LOGGER_NAME', 'Worker', 'WorkerConfig', 'QueueCellRunner', 'parse_database',
           'set_log_handler', 'parse_logger_level')

LOGGER_NAME = 'mixmode'
logger = logging.getLogger(LOGGER_NAME)

LOG_FORMAT = '[%(process)d] %(asctime)s (%(name)s) %(levelname)-8s %(message)s'


def set_log_handler(target_logger):
    """
    Add a stream handler with the package format, only if the logger has none
    """
    if not target_logger.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        target_logger.addHandler(handler)


def parse_logger_level(value):
    """
    Return the logging level for a name ("info") or a number ("20")
    """
    if isinstance(value, int) or str(value).isdigit():
        return int(value)
    level = logging.getLevelName(str(value).upper())
    if not isinstance(level, int):
        raise ValueError('Invalid logger level %s' % value)
    return level


def parse_database(value):
    """
    Return a connection dict from a "host:port:db" string
    """
    host, port, db = value.split(':')
    return dict(host=host, port=int(port), db=int(db))


class Worker(object):
    """
    Pop bench cell jobs from the queues, highest priority first, run them and
    record their success or error.
    """
    queues = None

    queue_model = Queue
    error_model = Error

    logger_name = LOGGER_NAME
    # None to keep the level set by the caller
    logger_level = None
    save_errors = True
    save_tracebacks = True

    # maximum number of jobs to run
    max_loops = 1000
    # max total duration of the worker, in seconds
    max_duration = None
    # max delay for blpop
    timeout = 30
    # minimum delay in seconds between two fetches of the queues keys
    fetch_priorities_delay = 25
    # number of times to requeue a failing job
    requeue_times = 0
    # added to the priority of a requeued job
    requeue_priority_delta = -1
    # stop at the first blpop timeout with no waiting job
    stop_when_idle = False

    # intercept SIGTERM and SIGINT to stop after the current job
    terminate_gracefuly = True

    # callback to run for each job, self.execute if None
    callback = None

    # all parameters that can be passed to the constructor
    parameters = ('queues', 'callback', 'queue_model', 'error_model',
                  'logger_name', 'logger_level', 'save_errors',
                  'save_tracebacks', 'max_loops', 'max_duration',
                  'terminate_gracefuly', 'timeout', 'fetch_priorities_delay',
                  'requeue_times', 'requeue_priority_delta', 'stop_when_idle')

    @staticmethod
    def _parse_queues(queues):
        """
        Return a list of queue names from a list, or a comma separated string
        """
        if not queues:
            raise ConfigurationException('The queue(s) to use are not defined')
        if isinstance(queues, str):
            queues = queues.split(',')
        elif isinstance(queues, (list, tuple)):
            for name in queues:
                if not isinstance(name, str):
                    raise ConfigurationException('Queue name "%s" is not a string' % (name, ))
        else:
            raise ConfigurationException('Invalid format for queues names')
        return list(queues)

    def __init__(self, queues=None, **kwargs):
        if queues is not None:
            self.queues = queues
        self.queues = self._parse_queues(self.queues)

        for parameter in self.parameters:
            if parameter in kwargs:
                setattr(self, parameter, kwargs[parameter])

        self._assert_correct_model(self.queue_model, Queue, 'queue')
        self._assert_correct_model(self.error_model, Error, 'error')

        if not self.callback:
            self.callback = self.execute
        if self.max_duration:
            self.max_duration = timedelta(seconds=self.max_duration)

        self.set_logger()

        if self.terminate_gracefuly:
            self.handle_end_signal()

        self.keys = []  # redis keys to listen
        self.num_loops = 0
        self.start_date = None
        self.end_date = None
        self.wanted_end_date = None
        self.end_forced = False  # set it to True in "execute" to stop just after
        self.status = None
        self.end_signal_caught = False
        self.last_update_keys = None

        self._update_status_callbacks = []

    @staticmethod
    def _assert_correct_model(model_to_check, model_reference, obj_name):
        if not issubclass(model_to_check, model_reference):
            raise ConfigurationException('The %s model must be a subclass of %s'
                                         % (obj_name, model_reference.__name__))

    def _set_signal_handlers(self, handler):
        try:
            signal.signal(signal.SIGTERM, handler)
            signal.signal(signal.SIGINT, handler)
        except ValueError:
            self.log('Signals cannot be caught in a Thread', level='warning')

    def handle_end_signal(self):
        self._set_signal_handlers(self.catch_end_signal)

    def stop_handling_end_signal(self):
        self._set_signal_handlers(signal.SIG_DFL)

    def set_logger(self):
        self.logger = logging.getLogger(self.logger_name)
        if self.logger_level is not None:
            self.logger.setLevel(self.logger_level)

    @property
    def id(self):
        """
        Identifier of the worker used in logs and process title
        """
        if not hasattr(self, '_id'):
            self._id = str(threading.current_thread().ident + id(self))[-6:]
        return self._id

    def log(self, message, level='info'):
        getattr(self.logger, level)('[%s] %s' % (self.id, message))

    @property
    def connection(self):
        return self.queue_model.get_connection()

    def must_stop(self):
        """
        True if the worker must stop when the current loop is over
        """
        return bool(self.terminate_gracefuly and self.end_signal_caught
                    or self.num_loops >= self.max_loops or self.end_forced
                    or self.wanted_end_date and datetime.utcnow() >= self.wanted_end_date)

    def set_status(self, status):
        self.status = status
        for callback in self._update_status_callbacks:
            callback(self)

    def _add_update_status_callback(self, callback):
        self._update_status_callbacks.append(callback)

    def wait_for_job(self):
        """
        Block on the waiting lists and return (queue, job), or None on timeout
        """
        popped = self.connection.blpop(self.keys, self.timeout)
        if popped is None:
            return None
        queue_key, job_ident = popped
        self.set_status('running')
        return self.get_queue(queue_key), self.get_job(job_ident)

    def get_job(self, job_ident):
        return CellJob.get_from_ident(job_ident)

    def get_queue(self, queue_key):
        """
        Return the queue owning the given waiting list key
        """
        try:
            queue_pk = int(queue_key.split(':')[-2])
        except (ValueError, IndexError):
            raise DoesNotExist('Unable to get the queue from the key %s' % queue_key)
        return self.queue_model.get(queue_pk)

    def catch_end_signal(self, signum, frame):
        if self.end_signal_caught:
            self.log('Previous signal caught, will end soon')
            return

        signal_name = dict((getattr(signal, name), name) for name in dir(signal)
                           if name.startswith('SIG') and '_' not in name).get(signum, signum)

        if self.status == 'running':
            self.log('Caught %s signal: stopping after current cell' % signal_name,
                     level='critical')
        else:
            self.log('Caught %s signal: stopping in max %d seconds' % (signal_name, self.timeout),
                     level='critical')

        self.end_signal_caught = self.end_forced = True

    def execute(self, job, queue):
        """
        Default callback: run the job. Its return value is passed to job_success.
        """
        return job.run(queue)

    def update_keys(self):
        self.keys = self.queue_model.get_waiting_keys(self.queues)
        if not self.keys:
            self.log('No queues yet', level='warning')
        self.last_update_keys = datetime.utcnow()

    def count_waiting_jobs(self):
        return self.queue_model.count_waiting_jobs(self.queues)

    def run(self):
        """
        Wait for jobs on the queues, run them, and stop when must_stop says so
        """
        if self.status:
            self.set_status('aborted')
            raise MixmodeException('This worker run is already terminated')

        self.set_status('starting')
        self.start_date = datetime.utcnow()
        if self.max_duration:
            self.wanted_end_date = self.start_date + self.max_duration

        must_stop = self.must_stop()
        while not self.keys and not must_stop:
            self.update_keys()
            if not self.keys:
                if self.stop_when_idle:
                    break
                sleep(self.fetch_priorities_delay)
            must_stop = self.must_stop()

        if self.keys and not must_stop:
            self.log('Run started.')
            self._main_loop()

        self.set_status('terminated')
        self.end_date = datetime.utcnow()
        self.log('Run terminated, with %d loops (duration=%s)' % (self.num_loops, self.elapsed))
        if self.terminate_gracefuly:
            self.stop_handling_end_signal()

    @property
    def elapsed(self):
        if not self.start_date:
            return None
        return (self.end_date or datetime.utcnow()) - self.start_date

    def _main_loop(self):
        fetch_priorities_delay = timedelta(seconds=self.fetch_priorities_delay)

        while not self.must_stop():
            self.set_status('waiting')

            if self.last_update_keys + fetch_priorities_delay < datetime.utcnow():
                self.update_keys()

            try:
                queue_and_job = self.wait_for_job()
            except Exception as e:
                self.log('Unable to get job: %s\n%s' % (e, traceback.format_exc()),
                         level='error')
                continue

            if queue_and_job is None:
                # blpop timeout
                if self.stop_when_idle and not self.count_waiting_jobs():
                    self.log('No more waiting cells, stopping')
                    break
                continue

            queue, job = queue_and_job
            self.num_loops += 1
            self.handle_job(job, queue)

    def handle_job(self, job, queue):
        """
        Run a popped job if it is still waiting, and record the outcome
        """
        identifier = '??'
        try:
            identifier, status = job.hmget('identifier', 'status')
            job._cached_identifier = identifier
            job._cached_status = status
            queue._cached_name = queue.name.hget()

            if status != STATUSES.WAITING:
                self.job_skipped(job, queue)
                return
            try:
                self.job_started(job, queue)
                result = self.callback(job, queue)
            except Exception as e:
                trace = traceback.format_exc() if self.save_tracebacks else None
                self.job_error(job, queue, e, trace)
            else:
                job._cached_status = job.status.hget()
                if job._cached_status == STATUSES.CANCELED:
                    self.job_skipped(job, queue)
                else:
                    self.job_success(job, queue, result)
        except Exception as e:
            self.log('[%s] unexpected error: %s\n%s' % (identifier, e, traceback.format_exc()),
                     level='error')
            try:
                queue.errors.rpush(job.ident)
            except Exception as e:
                self.log('[%s] unable to add the error in the queue: %s' % (identifier, e),
                         level='error')

    def _job_prefix(self, job, queue):
        return '[%s|%s|%s]' % (queue._cached_name, job.pk.get(), job._cached_identifier)

    def job_started(self, job, queue):
        job.hmset(start=str(datetime.utcnow()), status=STATUSES.RUNNING)
        job.tries.hincrby(1)
        self.log('%s starting' % self._job_prefix(job, queue))

    def job_success(self, job, queue, result):
        job.queued.delete()
        job.hmset(end=str(datetime.utcnow()), status=STATUSES.SUCCESS)
        queue.success.rpush(job.ident)
        job.on_success(queue, result)
        self.log('%s success, in %s' % (self._job_prefix(job, queue), job.duration))

    def job_error(self, job, queue, exception, trace=None):
        """
        Store the error, then requeue the job with a lower priority if it has
        tries left
        """
        to_be_requeued = bool(self.requeue_times
                              and self.requeue_times >= int(job.tries.hget() or 0))
        if not to_be_requeued:
            job.queued.delete()

        job.hmset(end=str(datetime.utcnow()), status=STATUSES.ERROR)
        queue.errors.rpush(job.ident)

        if self.save_errors:
            self.error_model.add_error(queue_name=queue._cached_name, job=job,
                                       error=exception, trace=trace)

        self.log('%s error: %s [%s]' % (self._job_prefix(job, queue), exception,
                                        'requeued' if to_be_requeued else 'NOT requeued'),
                 level='error')

        if to_be_requeued:
            priority = int(queue.priority.hget() or 0) + self.requeue_priority_delta
            job.requeue(queue_name=queue._cached_name, priority=priority)
            self.log('%s requeued with priority %s' % (self._job_prefix(job, queue), priority))

    def job_skipped(self, job, queue):
        job.queued.delete()
        self.log('%s job skipped (current status: %s)' % (
            self._job_prefix(job, queue), STATUSES.by_value(job._cached_status, 'UNKNOWN')),
            level='warning')


class WorkerConfig(object):
    """
    Command line of ``mixmode-worker``: every Worker parameter can be passed
    as an option. Instantiate it then call ``execute``.
    """

    help = "Run a worker computing mixmode benchmark cells"

    option_list = (
        # read by the mixmode-worker script, defined here to be accepted
        make_option('--worker-config', dest='worker_config',
            help='The worker config class to use, e.g. --worker-config=my.module.MyWorkerConfig, '
                 'default to mixmode.workers.WorkerConfig'),

        make_option('--print-options', action='store_true', dest='print_options',
            help='Print options used by the worker, e.g. --print-options'),
        make_option('--dry-run', action='store_true', dest='dry_run',
            help='Start the worker and stop it immediately, e.g. --dry-run'),

        make_option('--queues', action='store', dest='queues', default=DEFAULT_QUEUE_NAME,
            help='Name of the queues to handle, comma separated, e.g. --queues=%s'
                 % DEFAULT_QUEUE_NAME),

        make_option('--worker-class', action='store', dest='worker_class',
            help='Name of the Worker class to use, e.g. --worker-class=my.module.WorkerClass'),

        make_option('--logger-name', action='store', dest='logger_name',
            help='The base name to use for logging, e.g. --logger-name="mixmode.worker"'),
        make_option('--logger-level', action='store', dest='logger_level',
            help='The level to use for logging, e.g. --logger-level=INFO'),

        make_option('--save-errors', action='store_true', dest='save_errors',
            help='Save cell errors in the Error model, e.g. --save-errors'),
        make_option('--no-save-errors', action='store_false', dest='save_errors',
            help='Do not save cell errors in the Error model, e.g. --no-save-errors'),
        make_option('--save-tracebacks', action='store_true', dest='save_tracebacks',
            help='Save tracebacks with the errors, e.g. --save-tracebacks'),
        make_option('--no-save-tracebacks', action='store_false', dest='save_tracebacks',
            help='Do not save tracebacks with the errors, e.g. --no-save-tracebacks'),

        make_option('--max-loops', type='int', dest='max_loops',
            help='Max number of cells to run, e.g. --max-loops=100'),
        make_option('--max-duration', type='int', dest='max_duration',
            help='Max duration of the worker, in seconds, e.g. --max-duration=3600'),
        make_option('--stop-when-idle', action='store_true', dest='stop_when_idle',
            help='Stop when no cell is waiting anymore, e.g. --stop-when-idle'),

        make_option('--terminate-gracefuly', action='store_true', dest='terminate_gracefuly',
            help='Stop after the current cell on SIGTERM and SIGINT, e.g. --terminate-gracefuly'),
        make_option('--no-terminate-gracefuly', action='store_false', dest='terminate_gracefuly',
            help='Do not intercept SIGTERM and SIGINT, e.g. --no-terminate-gracefuly'),

        make_option('--timeout', type='int', dest='timeout',
            help='Max delay (seconds) to wait for a redis BLPOP call (0 for no timeout), '
                 'e.g. --timeout=30'),
        make_option('--fetch-priorities-delay', type='int', dest='fetch_priorities_delay',
            help='Min delay (seconds) between two fetches of the queues, '
                 'e.g. --fetch-priorities-delay=20'),

        make_option('--requeue-times', type='int', dest='requeue_times',
            help='Number of times to requeue a failing cell (default to 0), e.g. --requeue-times=2'),
        make_option('--requeue-priority-delta', type='int', dest='requeue_priority_delta',
            help='Added to the priority of a requeued cell (default to -1), '
                 'e.g. --requeue-priority-delta=-2'),

        make_option('--database', action='store', dest='database',
            help='Redis database to use (host:port:db), e.g. --database=localhost:6379:15'),

        make_option('--no-title', action='store_false', dest='update_title', default=True,
            help="Do not update the title of the worker's process, e.g. --no-title"),
    )

    def __init__(self, argv=None):
        self.argv = argv or sys.argv[:]
        self.prog_name = os.path.basename(self.argv[0])
        self.manage_options()
        self.update_proc_title()

    def get_version(self):
        return '(mixmode %s, redis-limpyd %s)' % (mixmode_version, limpyd_version)

    def usage(self):
        return '%%prog [options]\n\n%s' % self.help

    def create_parser(self):
        return OptionParser(prog=self.prog_name,
                            usage=self.usage(),
                            version='%%prog %s' % self.get_version(),
                            option_list=self.option_list)

    def manage_options(self):
        """
        Parse and check the command line, exit through parser.error if invalid
        """
        self.parser = self.create_parser()
        self.options, self.args = self.parser.parse_args(self.argv)

        try:
            self.options.worker_class = (import_class(self.options.worker_class)
                                         if self.options.worker_class else Worker)
        except Exception as e:
            self.parser.error('Unable to import "worker_class": %s' % e)

        if self.options.logger_level:
            try:
                self.options.logger_level = parse_logger_level(self.options.logger_level)
            except ValueError:
                self.parser.error('Invalid logger-level %s' % self.options.logger_level)

        for name in ('max_loops', 'max_duration', 'timeout', 'requeue_times'):
            value = getattr(self.options, name)
            if value is not None and value < 0:
                self.parser.error('The %s argument (%s) must be a positive integer'
                                  % (name.replace('_', '-'), value))

        if self.options.fetch_priorities_delay is not None \
                and self.options.fetch_priorities_delay <= 0:
            self.parser.error('The fetch-priorities-delay argument (%s) must be a positive '
                              'integer' % self.options.fetch_priorities_delay)

        self.database_config = None
        if self.options.database:
            try:
                self.database_config = parse_database(self.options.database)
            except ValueError:
                self.parser.error('Invalid database "%s", expected host:port:db'
                                  % self.options.database)

        self.update_title = self.options.update_title

    def print_options(self):
        print("The script is running with the following options:")
        database_config = self.database_config or \
            self.worker.queue_model.database.connection_settings
        print(" - dry-run = %s" % self.options.dry_run)
        print(" - worker-config = %s" % self.__class__)
        print(" - database = %s:%s:%s" % (database_config['host'], database_config['port'],
                                          database_config['db']))
        print(" - worker-class = %s" % self.options.worker_class)

        print("The worker will run with the following options:")
        for name in self.options.worker_class.parameters:
            option = getattr(self.worker, name)
            if name == 'callback' and self.options.worker_class.execute == Worker.execute:
                option = '<cell jobs "run" method>'
            elif isinstance(option, (list, tuple, set)):
                option = ','.join(option)
            print(" - %s = %s" % (name.replace('_', '-'), option))

    def execute(self):
        self.prepare_models()
        self.prepare_worker()
        if self.options.print_options:
            self.print_options()
        self.worker.run()

    def prepare_models(self):
        if self.database_config:
            # queues, jobs and errors share the same database object
            self.options.worker_class.queue_model.database.reset(**self.database_config)

    def prepare_worker_options(self):
        worker_options = dict()
        for name in self.options.worker_class.parameters:
            value = getattr(self.options, name, None)
            if value is not None:
                worker_options[name] = value
        return worker_options

    def prepare_worker(self):
        self.worker = self.options.worker_class(**self.prepare_worker_options())
        if self.update_title:
            self.worker._add_update_status_callback(self.update_proc_title)
            self.update_proc_title()

        set_log_handler(self.worker.logger)
        if self.worker.logger.level == logging.NOTSET:
            self.worker.logger.setLevel(logging.INFO)

        if self.options.dry_run:
            self.worker.end_forced = True

    def get_proc_title(self):
        """
        e.g. "mixmode-worker#123456 [waiting] queues=mixmode-bench loop=3/1000 waiting=12"
        """
        worker = getattr(self, 'worker', None)
        parts = [self.prog_name.replace('.py', '') + ('#%s' % worker.id if worker else '')]

        status = 'init'
        if worker and worker.status:
            status = worker.status
            if worker.end_forced:
                status += ' - ending'
        parts.append('[%s]' % status)

        if worker:
            parts.append('queues=%s' % ','.join(worker.queues))
        if worker and worker.status:
            parts.append('loop=%s/%s' % (worker.num_loops, worker.max_loops))
            parts.append('waiting=%s' % worker.count_waiting_jobs())
            if worker.start_date:
                duration = 'duration=%s' % timedelta(seconds=int(round(
                    worker.elapsed.total_seconds())))
                if worker.max_duration:
                    duration += '/%s' % worker.max_duration
                parts.append(duration)

        return ' '.join(parts)

    def update_proc_title(self, worker=None):
        if not self.update_title:
            return
        setproctitle(self.get_proc_title())


class QueueCellRunner(object):
    """
    Run bench cells through the redis queue: queue every cell, work on them
    in the current process until none is waiting, then wait for the cells
    taken by other workers and collect the results.
    """
    worker_class = Worker
    job_model = CellJob
    poll_delay = 2

    def __init__(self, database=None, queue_name=DEFAULT_QUEUE_NAME, run=None, timeout=5,
                 max_wait=None, on_cell_done=None):
        self.database = database
        self.queue_name = queue_name
        self.run_name = run
        self.timeout = timeout
        self.max_wait = max_wait
        self.on_cell_done = on_cell_done

    def _run_name(self, settings):
        return self.run_name or 'seed-%s' % settings.seed

    def _jobs_by_cell(self, cells, settings):
        run = self._run_name(settings)
        return dict((cell, self.job_model.add_cell(cell, settings, run=run,
                                                   queue_name=self.queue_name))
                    for cell in cells)

    def _cancel_unfinished(self, jobs, results):
        """
        Cancel the jobs of the run still waiting or running
        """
        for cell, job in jobs.items():
            if cell not in results and job.status.hget() in (STATUSES.WAITING, STATUSES.RUNNING):
                job.cancel()
                logger.warning('[%s] canceled', job.identifier.hget())

    def run(self, cells, settings):
        if self.database:
            self.job_model.database.reset(**self.database)
        jobs = self._jobs_by_cell(cells, settings)

        worker = self.worker_class(self.queue_name, stop_when_idle=True, timeout=self.timeout,
                                   max_loops=len(cells), terminate_gracefuly=False)
        worker.run()

        results = {}
        started = datetime.utcnow()
        while True:
            failed = []
            for cell, job in jobs.items():
                if cell in results:
                    continue
                status, queued = job.hmget('status', 'queued')
                if status == STATUSES.SUCCESS:
                    results[cell] = job.cell_result
                    if self.on_cell_done:
                        self.on_cell_done(results[cell], len(results), len(cells))
                elif status == STATUSES.CANCELED or status == STATUSES.ERROR and not queued:
                    failed.append(cell)
            if failed:
                self._cancel_unfinished(jobs, results)
                raise MixmodeException('Failed cell(s) (seed=%s): %s' % (
                    settings.seed, ', '.join(cell.identifier for cell in sorted(failed))))
            if len(results) == len(cells):
                break
            if self.max_wait and datetime.utcnow() - started > timedelta(seconds=self.max_wait):
                self._cancel_unfinished(jobs, results)
                raise MixmodeException('Timeout waiting for %d cell(s)'
                                       % (len(cells) - len(results)))
            sleep(self.poll_delay)

        return [results[cell] for cell in sorted(results)]
